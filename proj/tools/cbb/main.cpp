// cbb: trace-driven content-based billing engine CLI.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cbb/config.hpp"
#include "cbb/securepay.hpp"
#include "cbb/simulator.hpp"

namespace {

using cbb::Json;

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw cbb::Error(cbb::Errc::TRACE_INVALID, "cannot open file", path);
  Json doc = Json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw cbb::Error(cbb::Errc::MALFORMED_LINE, "not valid JSON", path);
  return doc;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw cbb::Error(cbb::Errc::CONFIG_INVALID, "cannot write file", path);
  out << content;
}

const cbb::SecureConfig& secure_section(const cbb::EngineConfig& config, const std::string& path) {
  if (!config.secure)
    throw cbb::Error(cbb::Errc::CONFIG_INVALID, "config has no secure section", path);
  return *config.secure;
}

cbb::KeyPair subscriber_keys(const cbb::SecureConfig& sec, const std::string& subscriber) {
  auto it = sec.subscribers.find(subscriber);
  if (it == sec.subscribers.end())
    throw cbb::Error(cbb::Errc::CONFIG_INVALID, "no key seed for subscriber", subscriber);
  return cbb::keypair_from_seed(it->second.key_seed);
}

const cbb::VaspConfig& vasp_config(const cbb::SecureConfig& sec, const std::string& vasp) {
  auto it = sec.vasps.find(vasp);
  if (it == sec.vasps.end())
    throw cbb::Error(cbb::Errc::CONFIG_INVALID, "no key seed for VASP", vasp);
  return it->second;
}

/// Rebuild the commitment bundle deterministically from the persisted state
/// file; refuses to continue when it no longer matches.
cbb::CommitmentBundle rebuild_bundle(const cbb::EngineConfig& config, const Json& state,
                                     const std::string& config_path) {
  const cbb::SecureConfig& sec = secure_section(config, config_path);
  const std::string subscriber = state.at("subscriber").get<std::string>();
  const std::string vasp = state.at("vasp").get<std::string>();
  cbb::KeyPair issuer = cbb::keypair_from_seed(sec.issuer_seed);
  cbb::KeyPair user = subscriber_keys(sec, subscriber);
  cbb::Credential credential =
      cbb::issue_credential(issuer, subscriber, user.public_key, sec.credential_window);
  auto seed = cbb::from_hex(state.at("seed").get<std::string>());
  if (!seed) throw cbb::Error(cbb::Errc::BAD_CHAIN, "bad seed in state file");
  cbb::CommitmentBundle bundle = cbb::make_commitment(
      user, credential, vasp, state.at("n").get<uint64_t>(),
      cbb::Money{state.at("value").get<int64_t>(), state.at("currency").get<std::string>()}, *seed,
      state.at("ts").get<int64_t>(), cbb::hash_by_name(sec.hash_alg), sec.hash_alg);
  if (bundle.commitment.commitment_id != state.at("commitment_id").get<std::string>())
    throw cbb::Error(cbb::Errc::MISMATCHED_COMMITMENT, "state file does not match config-derived chain");
  bundle.chain.next_index = state.at("next").get<uint64_t>();
  return bundle;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"content-based billing engine"};
  app.require_subcommand(1);

  // simulate
  auto* simulate = app.add_subcommand("simulate", "run the charging pipeline over a trace");
  std::string config_path, trace_path, out_dir;
  int64_t flush_interval = 0;
  simulate->add_option("--config", config_path, "engine configuration JSON")->required();
  simulate->add_option("--trace", trace_path, "trace JSONL")->required();
  simulate->add_option("--out", out_dir, "output directory")->required();
  simulate->add_option("--flush-interval", flush_interval,
                       "hot-billing flush interval in trace milliseconds (0 = off)");
  simulate->callback([&] {
    cbb::RunSummary summary = cbb::run_simulation(config_path, trace_path, out_dir, flush_interval);
    std::cout << summary.summary_text;
  });

  // validate
  auto* validate = app.add_subcommand("validate", "check a trace against the session invariants");
  std::string validate_trace;
  validate->add_option("--trace", validate_trace, "trace JSONL")->required();
  validate->callback([&] {
    std::ifstream in(validate_trace);
    if (!in) throw cbb::Error(cbb::Errc::TRACE_INVALID, "cannot open file", validate_trace);
    cbb::IngestResult result = cbb::ingest_trace(in);
    cbb::ValidationReport report = cbb::validate_session(result.events);
    Json o;
    o["events"] = result.events.size();
    Json violations = Json::array();
    for (const cbb::Violation& v : report.violations)
      violations.push_back(Json{{"event", v.event_index}, {"ctx", v.ctx}, {"message", v.message}});
    o["violations"] = std::move(violations);
    Json warnings = Json::array();
    for (const std::string& w : result.warnings) warnings.push_back(w);
    o["warnings"] = std::move(warnings);
    std::cout << o.dump(2) << "\n";
    if (!report.ok()) std::exit(1);
  });

  // invoice
  auto* invoice = app.add_subcommand("invoice", "rebuild invoices from an exported Ga file");
  std::string cdrs_path, invoice_out, invoice_config;
  invoice->add_option("--cdrs", cdrs_path, "cdrs.jsonl produced by simulate")->required();
  invoice->add_option("--out", invoice_out, "output invoices.json")->required();
  invoice->add_option("--config", invoice_config,
                      "engine config; marks subscribers with prepaid accounts as settled");
  invoice->callback([&] {
    std::optional<cbb::EngineConfig> cfg;
    if (!invoice_config.empty()) cfg = cbb::load_config(invoice_config);
    Json out = cbb::invoices_from_cdrs(cdrs_path, cfg ? &*cfg : nullptr);
    write_text_file(invoice_out, out.dump(2) + "\n");
  });

  // token
  auto* token = app.add_subcommand("token", "secured charging: commitments, tokens, clearance");
  token->require_subcommand(1);
  std::string t_config, t_subscriber, t_vasp, t_seed_hex, t_commitment, t_state, t_claim, t_tokens,
      t_out, t_user_commitment;
  uint64_t t_count = 0;
  int64_t t_value = 0, t_ts = 0;
  uint64_t t_user_k = 0;

  auto* commit = token->add_subcommand("commit", "create a certified token chain commitment");
  commit->add_option("--config", t_config, "engine config with a secure section")->required();
  commit->add_option("--subscriber", t_subscriber)->required();
  commit->add_option("--vasp", t_vasp)->required();
  commit->add_option("--count", t_count, "chain length N")->required();
  commit->add_option("--value", t_value, "token value in minor units")->required();
  commit->add_option("--seed", t_seed_hex, "hex seed for the chain")->required();
  commit->add_option("--ts", t_ts, "commitment timestamp (trace milliseconds)");
  commit->add_option("--commitment", t_commitment, "output commitment JSON")->required();
  commit->add_option("--state", t_state, "output private chain state JSON")->required();
  commit->callback([&] {
    cbb::EngineConfig config = cbb::load_config(t_config);
    const cbb::SecureConfig& sec = secure_section(config, t_config);
    cbb::KeyPair issuer = cbb::keypair_from_seed(sec.issuer_seed);
    cbb::KeyPair user = subscriber_keys(sec, t_subscriber);
    vasp_config(sec, t_vasp);  // fail early when the VASP is unknown
    cbb::Credential credential =
        cbb::issue_credential(issuer, t_subscriber, user.public_key, sec.credential_window);
    auto seed = cbb::from_hex(t_seed_hex);
    if (!seed || seed->empty()) throw cbb::Error(cbb::Errc::BAD_CHAIN, "bad --seed hex");
    cbb::CommitmentBundle bundle =
        cbb::make_commitment(user, credential, t_vasp, t_count,
                             cbb::Money{t_value, sec.token_currency}, *seed, t_ts,
                             cbb::hash_by_name(sec.hash_alg), sec.hash_alg);
    write_text_file(t_commitment, cbb::to_json(bundle.commitment).dump(2) + "\n");
    Json state;
    state["commitment_id"] = bundle.commitment.commitment_id;
    state["subscriber"] = t_subscriber;
    state["vasp"] = t_vasp;
    state["n"] = t_count;
    state["value"] = t_value;
    state["currency"] = sec.token_currency;
    state["ts"] = t_ts;
    state["seed"] = t_seed_hex;
    state["next"] = 1;
    write_text_file(t_state, state.dump(2) + "\n");
    std::cout << Json{{"commitment", bundle.commitment.commitment_id},
                      {"n", t_count},
                      {"token_value", t_value}}
                     .dump()
              << "\n";
  });

  auto* pay_cmd = token->add_subcommand("pay", "release tokens and extend the VASP claim");
  pay_cmd->add_option("--config", t_config)->required();
  pay_cmd->add_option("--state", t_state, "private chain state JSON (updated in place)")->required();
  pay_cmd->add_option("--claim", t_claim, "claim file (created or extended)")->required();
  pay_cmd->add_option("--count", t_count, "number of tokens to send")->required();
  pay_cmd->add_option("--tokens", t_tokens, "optional JSONL file of the released tokens");
  pay_cmd->callback([&] {
    cbb::EngineConfig config = cbb::load_config(t_config);
    const cbb::SecureConfig& sec = secure_section(config, t_config);
    Json state = read_json_file(t_state);
    cbb::CommitmentBundle bundle = rebuild_bundle(config, state, t_config);
    cbb::TokenVerifier verifier(bundle.commitment, cbb::hash_by_name(sec.hash_alg));
    if (std::filesystem::exists(t_claim)) {
      cbb::ClearanceClaim existing = cbb::parse_claim(read_json_file(t_claim));
      if (existing.commitment.commitment_id != bundle.commitment.commitment_id)
        throw cbb::Error(cbb::Errc::MISMATCHED_COMMITMENT, "claim file is for another commitment");
      cbb::PaymentToken resume{existing.commitment.commitment_id, existing.k, existing.w_k};
      if (existing.k > 0 && !verifier.accept(resume))
        throw cbb::Error(cbb::Errc::BAD_CHAIN, "existing claim does not verify");
    }
    std::string tokens_out;
    for (uint64_t i = 0; i < t_count; ++i) {
      cbb::PaymentToken tok = cbb::pay(bundle.chain);
      if (!verifier.accept(tok))
        throw cbb::Error(cbb::Errc::BAD_CHAIN, "released token failed VASP verification");
      tokens_out += cbb::to_json(tok).dump() + "\n";
    }
    state["next"] = bundle.chain.next_index;
    write_text_file(t_state, state.dump(2) + "\n");
    if (!t_tokens.empty()) write_text_file(t_tokens, tokens_out);
    cbb::KeyPair vasp_keys = cbb::keypair_from_seed(vasp_config(sec, bundle.commitment.vasp_id).key_seed);
    cbb::ClearanceClaim claim = cbb::make_claim(bundle.commitment, verifier.last_index(),
                                                verifier.last_digest(), vasp_keys);
    write_text_file(t_claim, cbb::to_json(claim).dump(2) + "\n");
    std::cout << Json{{"paid", t_count},
                      {"claim_k", verifier.last_index()},
                      {"claim_value", verifier.claim_value().amount}}
                     .dump()
              << "\n";
  });

  auto* verify_cmd = token->add_subcommand("verify", "verify a claim file");
  verify_cmd->add_option("--config", t_config)->required();
  verify_cmd->add_option("--claim", t_claim)->required();
  verify_cmd->callback([&] {
    cbb::EngineConfig config = cbb::load_config(t_config);
    const cbb::SecureConfig& sec = secure_section(config, t_config);
    cbb::ClearanceClaim claim = cbb::parse_claim(read_json_file(t_claim));
    cbb::KeyPair issuer = cbb::keypair_from_seed(sec.issuer_seed);
    uint64_t hash_ops = 0;
    cbb::HashFn counted = [&, inner = cbb::hash_by_name(sec.hash_alg)](const uint8_t* d, size_t n) {
      ++hash_ops;
      return inner(d, n);
    };
    Json ruling;
    bool valid = true;
    std::string reason;
    try {
      std::optional<uint64_t> vasp_key;
      auto vasp = sec.vasps.find(claim.commitment.vasp_id);
      if (vasp != sec.vasps.end())
        vasp_key = cbb::keypair_from_seed(vasp->second.key_seed).public_key;
      cbb::clear(claim, issuer.public_key, 0, counted, vasp_key);
    } catch (const cbb::Error& e) {
      valid = false;
      reason = std::string(cbb::to_string(e.code()));
    }
    ruling["valid"] = valid;
    if (!valid) ruling["reason"] = reason;
    ruling["k"] = claim.k;
    ruling["value"] = Json{{"amount", claim.commitment.token_value.amount * static_cast<int64_t>(claim.k)},
                           {"currency", claim.commitment.token_value.currency}};
    ruling["hash_ops"] = hash_ops;
    std::cout << ruling.dump(2) << "\n";
    if (!valid) std::exit(1);
  });

  auto* clear_cmd = token->add_subcommand("clear", "offline clearance of a claim");
  clear_cmd->add_option("--config", t_config)->required();
  clear_cmd->add_option("--claim", t_claim)->required();
  clear_cmd->add_option("--out", t_out, "optional settlement JSON output path");
  clear_cmd->callback([&] {
    cbb::EngineConfig config = cbb::load_config(t_config);
    const cbb::SecureConfig& sec = secure_section(config, t_config);
    cbb::ClearanceClaim claim = cbb::parse_claim(read_json_file(t_claim));
    cbb::KeyPair issuer = cbb::keypair_from_seed(sec.issuer_seed);
    const cbb::VaspConfig& vasp = vasp_config(sec, claim.commitment.vasp_id);
    cbb::SettlementInstruction settlement =
        cbb::clear(claim, issuer.public_key, vasp.fee_bp, cbb::hash_by_name(sec.hash_alg),
                   cbb::keypair_from_seed(vasp.key_seed).public_key);
    Json o;
    o["commitment"] = claim.commitment.commitment_id;
    o["k"] = claim.k;
    o["bill_user"] = Json{{"amount", settlement.bill_user.amount},
                          {"currency", settlement.bill_user.currency}};
    o["provider_fee"] = Json{{"amount", settlement.provider_fee.amount},
                             {"currency", settlement.provider_fee.currency}};
    o["vasp_share"] = Json{{"amount", settlement.vasp_share.amount},
                           {"currency", settlement.vasp_share.currency}};
    std::cout << o.dump(2) << "\n";
    if (!t_out.empty()) write_text_file(t_out, o.dump(2) + "\n");
  });

  auto* dispute_cmd = token->add_subcommand("dispute", "rule on a charge dispute");
  dispute_cmd->add_option("--config", t_config)->required();
  dispute_cmd->add_option("--claim", t_claim)->required();
  dispute_cmd->add_option("--user-k", t_user_k, "highest token index the user admits sending")
      ->required();
  dispute_cmd->add_option("--user-commitment", t_user_commitment,
                          "commitment id the user statement refers to (defaults to the claim's)");
  dispute_cmd->callback([&] {
    cbb::EngineConfig config = cbb::load_config(t_config);
    const cbb::SecureConfig& sec = secure_section(config, t_config);
    cbb::ClearanceClaim claim = cbb::parse_claim(read_json_file(t_claim));
    const std::string user_commitment =
        t_user_commitment.empty() ? claim.commitment.commitment_id : t_user_commitment;
    cbb::DisputeRuling ruling =
        cbb::dispute(user_commitment, t_user_k, claim, cbb::hash_by_name(sec.hash_alg));
    Json o;
    o["commitment"] = claim.commitment.commitment_id;
    o["user_stated_k"] = t_user_k;
    o["claimed_k"] = claim.k;
    o["claim_proven"] = ruling.claim_proven;
    o["ruled_k"] = ruling.ruled_k;
    o["amount_owed"] = Json{{"amount", ruling.amount_owed.amount},
                            {"currency", ruling.amount_owed.currency}};
    std::cout << o.dump(2) << "\n";
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const cbb::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
