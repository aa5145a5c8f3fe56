#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbb/crypto.hpp"
#include "cbb/error.hpp"
#include "cbb/money.hpp"

namespace cbb {

using Json = nlohmann::ordered_json;

struct ValidityWindow {
  int64_t from = 0;
  int64_t to = 0;

  bool contains(int64_t ts) const { return ts >= from && ts <= to; }
};

enum class CredentialIssuer : uint8_t { NGN_PROVIDER, TTP };

inline std::string_view to_string(CredentialIssuer i) {
  return i == CredentialIssuer::NGN_PROVIDER ? "NGN_PROVIDER" : "TTP";
}

/// Certificate binding a subscriber to a verification key for a validity
/// window, signed by the provider (or a TTP on its behalf).
struct Credential {
  std::string subscriber_id;
  uint64_t verify_key = 0;
  CredentialIssuer issuer = CredentialIssuer::NGN_PROVIDER;
  ValidityWindow window;
  Signature issuer_sig;
};

namespace securepay_detail {

inline std::string credential_message(const Credential& c) {
  std::string msg = "cred";
  msg += '\0';
  msg += c.subscriber_id;
  msg += '\0';
  msg += public_key_hex(c.verify_key);
  msg += '\0';
  msg += std::to_string(c.window.from);
  msg += '\0';
  msg += std::to_string(c.window.to);
  msg += '\0';
  msg += to_string(c.issuer);
  return msg;
}

}  // namespace securepay_detail

inline Credential issue_credential(const KeyPair& issuer_keys, const std::string& subscriber_id,
                                   uint64_t subscriber_key, ValidityWindow window,
                                   CredentialIssuer issuer = CredentialIssuer::NGN_PROVIDER) {
  Credential c;
  c.subscriber_id = subscriber_id;
  c.verify_key = subscriber_key;
  c.issuer = issuer;
  c.window = window;
  c.issuer_sig = sign(issuer_keys.secret, securepay_detail::credential_message(c));
  return c;
}

inline bool verify_credential(const Credential& c, uint64_t issuer_key, int64_t at) {
  if (!c.window.contains(at)) return false;
  return verify(issuer_key, securepay_detail::credential_message(c), c.issuer_sig);
}

/// Certified root of a hash chain of N spend tokens, each worth
/// `token_value`. The hash algorithm is recorded so claims are
/// self-describing.
struct TokenCommitment {
  std::string commitment_id;
  std::string subscriber_id;
  std::string vasp_id;
  Digest chain_root{};
  uint64_t chain_length = 0;  // N
  Money token_value;
  int64_t timestamp = 0;
  std::string hash_alg;
  Signature user_sig;
  Credential credential;
};

/// Token i is the chain preimage w_i; hash(w_i) = w_{i-1}, w_0 = root.
struct PaymentToken {
  std::string commitment_id;
  uint64_t index = 0;  // 1-based
  Digest preimage{};
};

/// Private chain state held by the paying user.
struct ChainState {
  std::string commitment_id;
  std::vector<Digest> chain;  // w_0 .. w_N
  uint64_t next_index = 1;
};

namespace securepay_detail {

inline std::string commitment_message(const TokenCommitment& c) {
  std::string msg = "commit";
  msg += '\0';
  msg += c.subscriber_id;
  msg += '\0';
  msg += c.vasp_id;
  msg += '\0';
  msg += to_hex(c.chain_root);
  msg += '\0';
  msg += std::to_string(c.chain_length);
  msg += '\0';
  msg += std::to_string(c.token_value.amount);
  msg += '\0';
  msg += c.token_value.currency;
  msg += '\0';
  msg += std::to_string(c.timestamp);
  msg += '\0';
  msg += c.hash_alg;
  return msg;
}

inline std::string claim_message(const std::string& commitment_id, uint64_t k, const Digest& w_k) {
  std::string msg = "claim";
  msg += '\0';
  msg += commitment_id;
  msg += '\0';
  msg += std::to_string(k);
  msg += '\0';
  msg += to_hex(w_k);
  return msg;
}

inline Digest chain_seed_digest(const Bytes& seed, const TokenCommitment& header,
                                const HashFn& hash) {
  // nonce ties the chain to the commitment parameters; root excluded (it
  // is derived from the chain itself)
  std::string nonce_msg = "nonce";
  nonce_msg += '\0';
  nonce_msg += header.subscriber_id;
  nonce_msg += '\0';
  nonce_msg += header.vasp_id;
  nonce_msg += '\0';
  nonce_msg += std::to_string(header.chain_length);
  nonce_msg += '\0';
  nonce_msg += std::to_string(header.token_value.amount);
  nonce_msg += '\0';
  nonce_msg += std::to_string(header.timestamp);
  const Digest nonce = hash(reinterpret_cast<const uint8_t*>(nonce_msg.data()), nonce_msg.size());
  Bytes top_input(seed);
  top_input.insert(top_input.end(), nonce.begin(), nonce.end());
  return hash(top_input.data(), top_input.size());
}

}  // namespace securepay_detail

struct CommitmentBundle {
  TokenCommitment commitment;
  ChainState chain;
};

/// Build w_N = hash(seed || nonce), w_{i-1} = hash(w_i); sign the root.
/// Deterministic given the seed.
inline CommitmentBundle make_commitment(const KeyPair& user_keys, const Credential& credential,
                                        const std::string& vasp_id, uint64_t chain_length,
                                        Money token_value, const Bytes& seed, int64_t timestamp,
                                        const HashFn& hash, const std::string& hash_alg) {
  if (chain_length < 1)
    throw Error(Errc::INVALID_CREDENTIAL, "chain length must be at least 1");
  if (user_keys.public_key != credential.verify_key)
    throw Error(Errc::INVALID_CREDENTIAL, "signing key does not match the credential",
                credential.subscriber_id);
  if (!credential.window.contains(timestamp))
    throw Error(Errc::INVALID_CREDENTIAL, "credential not valid at commitment time",
                credential.subscriber_id);

  TokenCommitment c;
  c.subscriber_id = credential.subscriber_id;
  c.vasp_id = vasp_id;
  c.chain_length = chain_length;
  c.token_value = std::move(token_value);
  c.timestamp = timestamp;
  c.hash_alg = hash_alg;
  c.credential = credential;

  std::vector<Digest> chain(chain_length + 1);
  chain[chain_length] = securepay_detail::chain_seed_digest(seed, c, hash);
  for (uint64_t i = chain_length; i > 0; --i) chain[i - 1] = hash(chain[i].data(), chain[i].size());
  c.chain_root = chain[0];

  const std::string msg = securepay_detail::commitment_message(c);
  const Digest id_digest = Sha256::hash(msg);
  c.commitment_id = to_hex(id_digest.data(), 8);
  c.user_sig = sign(user_keys.secret, msg);

  ChainState state;
  state.commitment_id = c.commitment_id;
  state.chain = std::move(chain);
  state.next_index = 1;
  return {std::move(c), std::move(state)};
}

/// Release the next token, strictly in order.
inline PaymentToken pay(ChainState& state) {
  if (state.next_index >= state.chain.size())
    throw Error(Errc::CHAIN_EXHAUSTED, "all tokens spent", state.commitment_id);
  PaymentToken t{state.commitment_id, state.next_index, state.chain[state.next_index]};
  ++state.next_index;
  return t;
}

/// Accept iff hashing the token's preimage (i - j) times reproduces the
/// last verified digest; (0, chain_root) is the base. Cost is exactly
/// i - j hash invocations.
inline bool verify_token(const TokenCommitment& commitment, uint64_t last_index,
                         const Digest& last_digest, const PaymentToken& token, const HashFn& hash) {
  if (token.commitment_id != commitment.commitment_id) return false;
  if (token.index <= last_index || token.index > commitment.chain_length) return false;
  Digest cur = token.preimage;
  for (uint64_t i = token.index; i > last_index; --i) cur = hash(cur.data(), cur.size());
  return cur == last_digest;
}

/// VASP-side incremental verifier; remembers the highest verified token.
class TokenVerifier {
 public:
  TokenVerifier(TokenCommitment commitment, HashFn hash)
      : commitment_(std::move(commitment)), hash_(std::move(hash)) {
    last_digest_ = commitment_.chain_root;
  }

  bool accept(const PaymentToken& token) {
    if (!verify_token(commitment_, last_index_, last_digest_, token, hash_)) return false;
    last_index_ = token.index;
    last_digest_ = token.preimage;
    return true;
  }

  uint64_t last_index() const { return last_index_; }
  const Digest& last_digest() const { return last_digest_; }
  Money claim_value() const { return commitment_.token_value * static_cast<int64_t>(last_index_); }
  const TokenCommitment& commitment() const { return commitment_; }

 private:
  TokenCommitment commitment_;
  HashFn hash_;
  uint64_t last_index_ = 0;
  Digest last_digest_{};
};

/// Billing proof the VASP forwards for offline clearance.
struct ClearanceClaim {
  TokenCommitment commitment;
  uint64_t k = 0;       // highest token received
  Digest w_k{};         // its preimage (the root itself for k = 0)
  Signature vasp_sig;
  std::string hash_alg;
};

inline ClearanceClaim make_claim(const TokenCommitment& commitment, uint64_t k, const Digest& w_k,
                                 const KeyPair& vasp_keys) {
  ClearanceClaim claim;
  claim.commitment = commitment;
  claim.k = k;
  claim.w_k = w_k;
  claim.hash_alg = commitment.hash_alg;
  claim.vasp_sig = sign(vasp_keys.secret, securepay_detail::claim_message(commitment.commitment_id, k, w_k));
  return claim;
}

struct SettlementInstruction {
  Money bill_user;
  Money provider_fee;
  Money vasp_share;
};

/// Offline clearance: verify everything, then split k * token_value between
/// provider fee (basis points, floored) and VASP share. Exact by
/// construction: bill = share + fee.
inline SettlementInstruction clear(const ClearanceClaim& claim, uint64_t issuer_key,
                                   int64_t fee_basis_points, const HashFn& hash,
                                   std::optional<uint64_t> vasp_key = std::nullopt) {
  const TokenCommitment& c = claim.commitment;
  if (claim.k > c.chain_length)
    throw Error(Errc::OVERCLAIM,
                "claimed " + std::to_string(claim.k) + " of " + std::to_string(c.chain_length),
                c.commitment_id);
  if (!verify_credential(c.credential, issuer_key, c.timestamp))
    throw Error(Errc::BAD_CREDENTIAL, "credential does not verify", c.subscriber_id);
  if (c.credential.subscriber_id != c.subscriber_id ||
      !verify(c.credential.verify_key, securepay_detail::commitment_message(c), c.user_sig))
    throw Error(Errc::BAD_COMMITMENT_SIG, "commitment signature does not verify", c.commitment_id);
  Digest cur = claim.w_k;
  for (uint64_t i = claim.k; i > 0; --i) cur = hash(cur.data(), cur.size());
  if (cur != c.chain_root)
    throw Error(Errc::BAD_CHAIN, "token preimage does not reach the chain root", c.commitment_id);
  if (vasp_key &&
      !verify(*vasp_key, securepay_detail::claim_message(c.commitment_id, claim.k, claim.w_k),
              claim.vasp_sig))
    throw Error(Errc::BAD_CLAIM_SIG, "VASP claim signature does not verify", c.commitment_id);

  const int64_t bill = c.token_value.amount * static_cast<int64_t>(claim.k);
  const int64_t fee = bill * fee_basis_points / 10'000;
  const std::string& cur_code = c.token_value.currency;
  return {Money{bill, cur_code}, Money{fee, cur_code}, Money{bill - fee, cur_code}};
}

struct DisputeRuling {
  uint64_t ruled_k = 0;
  bool claim_proven = false;
  Money amount_owed;
};

/// Possession of a valid preimage proves the user released that many
/// tokens; an unprovable claim rules at zero.
inline DisputeRuling dispute(const std::string& user_commitment_id, uint64_t user_stated_k,
                             const ClearanceClaim& claim, const HashFn& hash) {
  (void)user_stated_k;  // recorded by the caller; the chain decides
  if (user_commitment_id != claim.commitment.commitment_id)
    throw Error(Errc::MISMATCHED_COMMITMENT, user_commitment_id + " vs " + claim.commitment.commitment_id);
  DisputeRuling ruling;
  ruling.amount_owed = Money{0, claim.commitment.token_value.currency};
  if (claim.k <= claim.commitment.chain_length) {
    Digest cur = claim.w_k;
    for (uint64_t i = claim.k; i > 0; --i) cur = hash(cur.data(), cur.size());
    if (cur == claim.commitment.chain_root) {
      ruling.claim_proven = true;
      ruling.ruled_k = claim.k;
      ruling.amount_owed = claim.commitment.token_value * static_cast<int64_t>(claim.k);
    }
  }
  return ruling;
}

// ---------------------------------------------------------------------------
// JSON formats (commitment, claim and chain-state files)

inline Json to_json(const Credential& c) {
  Json o;
  o["subscriber"] = c.subscriber_id;
  o["key"] = public_key_hex(c.verify_key);
  o["issuer"] = std::string(to_string(c.issuer));
  o["from"] = c.window.from;
  o["to"] = c.window.to;
  o["sig"] = c.issuer_sig.to_hex();
  return o;
}

inline Credential parse_credential(const Json& o) {
  Credential c;
  c.subscriber_id = o.at("subscriber").get<std::string>();
  auto key = public_key_from_hex(o.at("key").get<std::string>());
  auto sig = Signature::from_hex(o.at("sig").get<std::string>());
  if (!key || !sig) throw Error(Errc::BAD_CREDENTIAL, "malformed credential encoding");
  c.verify_key = *key;
  c.issuer = o.at("issuer").get<std::string>() == "TTP" ? CredentialIssuer::TTP
                                                        : CredentialIssuer::NGN_PROVIDER;
  c.window.from = o.at("from").get<int64_t>();
  c.window.to = o.at("to").get<int64_t>();
  c.issuer_sig = *sig;
  return c;
}

inline Json to_json(const TokenCommitment& c) {
  Json o;
  o["id"] = c.commitment_id;
  o["subscriber"] = c.subscriber_id;
  o["vasp"] = c.vasp_id;
  o["root"] = to_hex(c.chain_root);
  o["n"] = c.chain_length;
  o["token_value"] = Json{{"amount", c.token_value.amount}, {"currency", c.token_value.currency}};
  o["ts"] = c.timestamp;
  o["hash_alg"] = c.hash_alg;
  o["sig"] = c.user_sig.to_hex();
  o["credential"] = to_json(c.credential);
  return o;
}

inline TokenCommitment parse_commitment(const Json& o) {
  TokenCommitment c;
  c.commitment_id = o.at("id").get<std::string>();
  c.subscriber_id = o.at("subscriber").get<std::string>();
  c.vasp_id = o.at("vasp").get<std::string>();
  auto root = digest_from_hex(o.at("root").get<std::string>());
  auto sig = Signature::from_hex(o.at("sig").get<std::string>());
  if (!root || !sig) throw Error(Errc::BAD_COMMITMENT_SIG, "malformed commitment encoding");
  c.chain_root = *root;
  c.chain_length = o.at("n").get<uint64_t>();
  c.token_value =
      Money{o.at("token_value").at("amount").get<int64_t>(), o.at("token_value").at("currency").get<std::string>()};
  c.timestamp = o.at("ts").get<int64_t>();
  c.hash_alg = o.at("hash_alg").get<std::string>();
  c.user_sig = *sig;
  c.credential = parse_credential(o.at("credential"));
  return c;
}

inline Json to_json(const ClearanceClaim& claim) {
  Json o;
  o["commitment"] = to_json(claim.commitment);
  o["k"] = claim.k;
  o["w_k"] = to_hex(claim.w_k);
  o["vasp_sig"] = claim.vasp_sig.to_hex();
  o["hash_alg"] = claim.hash_alg;
  return o;
}

inline ClearanceClaim parse_claim(const Json& o) {
  ClearanceClaim claim;
  claim.commitment = parse_commitment(o.at("commitment"));
  claim.k = o.at("k").get<uint64_t>();
  auto w = digest_from_hex(o.at("w_k").get<std::string>());
  auto sig = Signature::from_hex(o.at("vasp_sig").get<std::string>());
  if (!w || !sig) throw Error(Errc::BAD_CHAIN, "malformed claim encoding");
  claim.w_k = *w;
  claim.vasp_sig = *sig;
  claim.hash_alg = o.at("hash_alg").get<std::string>();
  return claim;
}

inline Json to_json(const PaymentToken& t) {
  Json o;
  o["commitment"] = t.commitment_id;
  o["i"] = t.index;
  o["w"] = to_hex(t.preimage);
  return o;
}

inline PaymentToken parse_token(const Json& o) {
  PaymentToken t;
  t.commitment_id = o.at("commitment").get<std::string>();
  t.index = o.at("i").get<uint64_t>();
  auto w = digest_from_hex(o.at("w").get<std::string>());
  if (!w) throw Error(Errc::BAD_CHAIN, "malformed token encoding");
  t.preimage = *w;
  return t;
}

}  // namespace cbb
