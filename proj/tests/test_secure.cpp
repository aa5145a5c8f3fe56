#include <doctest.h>

#include <random>

#include "cbb/crypto.hpp"
#include "cbb/securepay.hpp"

using namespace cbb;

namespace {

struct SecureFixture {
  KeyPair issuer = keypair_from_seed({'i', 's', 's'});
  KeyPair user = keypair_from_seed({'u', 's', 'r'});
  KeyPair vasp = keypair_from_seed({'v', 'a', 's'});
  ValidityWindow window{0, 1'000'000};
  HashFn hash = hash_by_name("sha-256");
  Credential credential = issue_credential(issuer, "alice", user.public_key, window);

  CommitmentBundle commit(uint64_t n, int64_t value = 100, int64_t ts = 500) {
    return make_commitment(user, credential, "shop", n, Money{value, "mu"}, {1, 2, 3, 4}, ts, hash,
                           "sha-256");
  }
};

HashFn counting_hash(const HashFn& inner, uint64_t& counter) {
  return [&counter, inner](const uint8_t* d, size_t n) {
    ++counter;
    return inner(d, n);
  };
}

}  // namespace

TEST_CASE("sha256: known vectors") {
  CHECK(to_hex(Sha256::hash(std::string_view(""))) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(to_hex(Sha256::hash(std::string_view("abc"))) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  std::string million(1'000'000, 'a');
  CHECK(to_hex(Sha256::hash(million)) ==
        "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0");
}

TEST_CASE("signatures: round trip, tamper detection, wrong key") {
  KeyPair keys = keypair_from_seed({9, 9, 9});
  Signature sig = sign(keys.secret, "hello world");
  CHECK(verify(keys.public_key, "hello world", sig));
  CHECK_FALSE(verify(keys.public_key, "hello worle", sig));
  KeyPair other = keypair_from_seed({8, 8, 8});
  CHECK_FALSE(verify(other.public_key, "hello world", sig));
  Signature broken = sig;
  broken.response ^= 1;
  CHECK_FALSE(verify(keys.public_key, "hello world", broken));
  // deterministic: same input, same signature
  CHECK(sign(keys.secret, "hello world") == sig);
}

TEST_CASE("credential: issue and verify, bit flip invalidates") {
  SecureFixture fix;
  CHECK(verify_credential(fix.credential, fix.issuer.public_key, 10));
  Credential tampered = fix.credential;
  tampered.subscriber_id = "alicf";  // one character off
  CHECK_FALSE(verify_credential(tampered, fix.issuer.public_key, 10));
  Credential rekeyed = fix.credential;
  rekeyed.verify_key ^= 1;
  CHECK_FALSE(verify_credential(rekeyed, fix.issuer.public_key, 10));
}

TEST_CASE("credential: outside the validity window never validates") {
  SecureFixture fix;
  CHECK_FALSE(verify_credential(fix.credential, fix.issuer.public_key, -1));
  CHECK_FALSE(verify_credential(fix.credential, fix.issuer.public_key, 1'000'001));
  CHECK(verify_credential(fix.credential, fix.issuer.public_key, 1'000'000));
}

TEST_CASE("commitment: N=1 chain verifies in one hash") {
  SecureFixture fix;
  auto bundle = fix.commit(1);
  PaymentToken t = pay(bundle.chain);
  CHECK(t.index == 1);
  uint64_t ops = 0;
  HashFn counted = counting_hash(fix.hash, ops);
  CHECK(verify_token(bundle.commitment, 0, bundle.commitment.chain_root, t, counted));
  CHECK(ops == 1);
}

TEST_CASE("commitment: deterministic given the seed") {
  SecureFixture fix;
  auto a = fix.commit(20);
  auto b = fix.commit(20);
  CHECK(a.commitment.commitment_id == b.commitment.commitment_id);
  CHECK(a.commitment.chain_root == b.commitment.chain_root);
  CHECK(a.commitment.user_sig == b.commitment.user_sig);
}

TEST_CASE("commitment: signing key must match the credential") {
  SecureFixture fix;
  KeyPair wrong = keypair_from_seed({42});
  try {
    make_commitment(wrong, fix.credential, "shop", 10, Money{100, "mu"}, {1}, 500, fix.hash,
                    "sha-256");
    FAIL("expected INVALID_CREDENTIAL");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::INVALID_CREDENTIAL);
  }
  // and a commitment outside the credential window is rejected
  try {
    make_commitment(fix.user, fix.credential, "shop", 10, Money{100, "mu"}, {1}, 2'000'000,
                    fix.hash, "sha-256");
    FAIL("expected INVALID_CREDENTIAL");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::INVALID_CREDENTIAL);
  }
}

TEST_CASE("commitment: token 37 of 100 verified from scratch costs 37 hashes") {
  SecureFixture fix;
  auto bundle = fix.commit(100);
  PaymentToken t37{bundle.commitment.commitment_id, 37, bundle.chain.chain[37]};
  // independent chain walk: hash w_37 exactly 37 times to reach the root
  Digest cur = t37.preimage;
  for (int i = 0; i < 37; ++i) cur = fix.hash(cur.data(), cur.size());
  REQUIRE(cur == bundle.commitment.chain_root);

  uint64_t ops = 0;
  HashFn counted = counting_hash(fix.hash, ops);
  CHECK(verify_token(bundle.commitment, 0, bundle.commitment.chain_root, t37, counted));
  CHECK(ops == 37);
}

TEST_CASE("pay: strict order, exhaustion at N") {
  SecureFixture fix;
  auto bundle = fix.commit(3);
  CHECK(pay(bundle.chain).index == 1);
  CHECK(pay(bundle.chain).index == 2);
  CHECK(pay(bundle.chain).index == 3);
  try {
    pay(bundle.chain);
    FAIL("expected CHAIN_EXHAUSTED");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::CHAIN_EXHAUSTED);
  }
}

TEST_CASE("verify: consecutive and skipped tokens") {
  SecureFixture fix;
  auto bundle = fix.commit(10);
  TokenVerifier verifier(bundle.commitment, fix.hash);
  PaymentToken t1 = pay(bundle.chain);
  CHECK(verifier.accept(t1));
  CHECK(verifier.last_index() == 1);
  pay(bundle.chain);  // tokens 2..5 released but lost in transit
  pay(bundle.chain);
  pay(bundle.chain);
  PaymentToken t5 = pay(bundle.chain);
  pay(bundle.chain);
  uint64_t ops = 0;
  TokenVerifier counting(bundle.commitment, counting_hash(fix.hash, ops));
  CHECK(counting.accept(t1));
  CHECK(ops == 1);
  CHECK(counting.accept(t5));  // gap of 4: i - j = 5 - 1
  CHECK(ops == 1 + 4);
  CHECK(counting.claim_value().amount == 5 * 100);
}

TEST_CASE("verify: random 256-bit forgeries never pass") {
  SecureFixture fix;
  auto bundle = fix.commit(16);
  std::mt19937_64 rng(2024);
  TokenVerifier verifier(bundle.commitment, fix.hash);
  for (int i = 0; i < 2000; ++i) {
    PaymentToken forged;
    forged.commitment_id = bundle.commitment.commitment_id;
    forged.index = 1 + (rng() % 16);
    for (auto& byte : forged.preimage) byte = static_cast<uint8_t>(rng());
    CHECK_FALSE(verifier.accept(forged));
  }
  CHECK(verifier.last_index() == 0);
}

TEST_CASE("verify: monotone claims as tokens arrive") {
  SecureFixture fix;
  auto bundle = fix.commit(30);
  TokenVerifier verifier(bundle.commitment, fix.hash);
  uint64_t previous = 0;
  for (int i = 0; i < 30; ++i) {
    PaymentToken t = pay(bundle.chain);
    if (i % 3 == 0) continue;  // some tokens never arrive
    CHECK(verifier.accept(t));
    CHECK(verifier.last_index() >= previous);
    previous = verifier.last_index();
  }
  CHECK(verifier.claim_value().amount ==
        static_cast<int64_t>(previous) * bundle.commitment.token_value.amount);
}

TEST_CASE("clear: valid claim splits bill into share plus fee") {
  SecureFixture fix;
  auto bundle = fix.commit(100);
  TokenVerifier verifier(bundle.commitment, fix.hash);
  for (int i = 0; i < 10; ++i) verifier.accept(pay(bundle.chain));
  ClearanceClaim claim =
      make_claim(bundle.commitment, verifier.last_index(), verifier.last_digest(), fix.vasp);
  SettlementInstruction s = clear(claim, fix.issuer.public_key, 500, fix.hash, fix.vasp.public_key);
  CHECK(s.bill_user.amount == 1000);
  CHECK(s.provider_fee.amount == 50);
  CHECK(s.vasp_share.amount == 950);
}

TEST_CASE("clear: k beyond N is OVERCLAIM") {
  SecureFixture fix;
  auto bundle = fix.commit(5);
  ClearanceClaim claim = make_claim(bundle.commitment, 6, bundle.chain.chain[5], fix.vasp);
  try {
    clear(claim, fix.issuer.public_key, 500, fix.hash);
    FAIL("expected OVERCLAIM");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::OVERCLAIM);
  }
}

TEST_CASE("clear: forged preimage is BAD_CHAIN") {
  SecureFixture fix;
  auto bundle = fix.commit(5);
  Digest forged{};
  forged[0] = 0xAB;
  ClearanceClaim claim = make_claim(bundle.commitment, 3, forged, fix.vasp);
  try {
    clear(claim, fix.issuer.public_key, 500, fix.hash);
    FAIL("expected BAD_CHAIN");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::BAD_CHAIN);
  }
}

TEST_CASE("clear: tampered commitment and wrong issuer are caught") {
  SecureFixture fix;
  auto bundle = fix.commit(5);
  for (int i = 0; i < 3; ++i) pay(bundle.chain);
  ClearanceClaim claim = make_claim(bundle.commitment, 3, bundle.chain.chain[3], fix.vasp);

  ClearanceClaim tampered = claim;
  tampered.commitment.token_value.amount = 9999;
  try {
    clear(tampered, fix.issuer.public_key, 500, fix.hash);
    FAIL("expected BAD_COMMITMENT_SIG");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::BAD_COMMITMENT_SIG);
  }

  KeyPair not_issuer = keypair_from_seed({7});
  try {
    clear(claim, not_issuer.public_key, 500, fix.hash);
    FAIL("expected BAD_CREDENTIAL");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::BAD_CREDENTIAL);
  }

  KeyPair not_vasp = keypair_from_seed({6});
  try {
    clear(claim, fix.issuer.public_key, 500, fix.hash, not_vasp.public_key);
    FAIL("expected BAD_CLAIM_SIG");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::BAD_CLAIM_SIG);
  }
}

TEST_CASE("clear: settlement conservation over randomized parameters") {
  SecureFixture fix;
  std::mt19937 rng(55);
  auto bundle = fix.commit(200, 1);  // token value replaced per trial below
  for (int trial = 0; trial < 100; ++trial) {
    const uint64_t n = 1 + rng() % 200;
    const int64_t value = 1 + rng() % 10'000;
    const int64_t fee_bp = rng() % 10'001;
    auto b = fix.commit(n, value);
    const uint64_t k = rng() % (n + 1);
    ClearanceClaim claim = make_claim(b.commitment, k, b.chain.chain[k], fix.vasp);
    SettlementInstruction s = clear(claim, fix.issuer.public_key, fee_bp, fix.hash);
    REQUIRE(s.bill_user.amount == static_cast<int64_t>(k) * value);
    REQUIRE(s.bill_user.amount == s.vasp_share.amount + s.provider_fee.amount);
  }
  (void)bundle;
}

TEST_CASE("dispute: the verified chain outranks the user statement") {
  SecureFixture fix;
  auto bundle = fix.commit(10);
  for (int i = 0; i < 8; ++i) pay(bundle.chain);
  ClearanceClaim claim = make_claim(bundle.commitment, 8, bundle.chain.chain[8], fix.vasp);
  DisputeRuling ruling = dispute(bundle.commitment.commitment_id, 5, claim, fix.hash);
  CHECK(ruling.claim_proven);
  CHECK(ruling.ruled_k == 8);
  CHECK(ruling.amount_owed.amount == 800);
}

TEST_CASE("dispute: unprovable claim rules at zero") {
  SecureFixture fix;
  auto bundle = fix.commit(10);
  Digest forged{};
  forged[4] = 0x11;
  ClearanceClaim claim = make_claim(bundle.commitment, 8, forged, fix.vasp);
  DisputeRuling ruling = dispute(bundle.commitment.commitment_id, 5, claim, fix.hash);
  CHECK_FALSE(ruling.claim_proven);
  CHECK(ruling.ruled_k == 0);
  CHECK(ruling.amount_owed.amount == 0);
}

TEST_CASE("dispute: zero claims agree at zero") {
  SecureFixture fix;
  auto bundle = fix.commit(4);
  ClearanceClaim claim = make_claim(bundle.commitment, 0, bundle.commitment.chain_root, fix.vasp);
  DisputeRuling ruling = dispute(bundle.commitment.commitment_id, 0, claim, fix.hash);
  CHECK(ruling.claim_proven);
  CHECK(ruling.ruled_k == 0);
  CHECK(ruling.amount_owed.amount == 0);
}

TEST_CASE("dispute: statements about different commitments do not mix") {
  SecureFixture fix;
  auto bundle = fix.commit(4);
  ClearanceClaim claim = make_claim(bundle.commitment, 0, bundle.commitment.chain_root, fix.vasp);
  CHECK_THROWS_AS(dispute("feedfacecafebeef", 1, claim, fix.hash), Error);
}

TEST_CASE("claim files: JSON round trip preserves verification") {
  SecureFixture fix;
  auto bundle = fix.commit(12);
  for (int i = 0; i < 7; ++i) pay(bundle.chain);
  ClearanceClaim claim = make_claim(bundle.commitment, 7, bundle.chain.chain[7], fix.vasp);
  Json encoded = to_json(claim);
  ClearanceClaim decoded = parse_claim(encoded);
  SettlementInstruction s = clear(decoded, fix.issuer.public_key, 250, fix.hash, fix.vasp.public_key);
  CHECK(s.bill_user.amount == 700);
  CHECK(s.bill_user.amount == s.vasp_share.amount + s.provider_fee.amount);
  CHECK(to_json(decoded) == encoded);
}
