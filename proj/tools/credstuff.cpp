// credstuff: operator entry points for the credential-stuffing defense
// toolkit.  One static binary with four subcommands:
//
//   serve  -- run a directory or responder process until signaled
//   login  -- process one login attempt against a local account store,
//             collecting phase first, then the counting phase if warranted
//   sim    -- detection-rate experiments (exact solvers and Monte Carlo)
//   bench  -- loopback latency / throughput measurement
//
// Configuration precedence: explicit flags > config file named by the
// CREDSTUFF_CONFIG environment variable > config file named by --config.
// Config files are flat JSON objects keyed by the long flag names without
// the leading dashes (e.g. {"w": 2, "fpr-col": 0.1}).
//
// Exit codes: 0 success, 2 configuration error, 3 network error,
// 4 protocol violation.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "credstuff/detect.hpp"
#include "credstuff/elgamal.hpp"
#include "credstuff/group.hpp"
#include "credstuff/net.hpp"
#include "credstuff/pmt.hpp"
#include "credstuff/rng.hpp"
#include "credstuff/sim.hpp"

using json = nlohmann::json;
using namespace credstuff;

namespace {

struct CliError {
  int code;
  std::string message;
};

volatile std::sig_atomic_t g_signaled = 0;
void on_signal(int) { g_signaled = 1; }

// --- config layering ---------------------------------------------------------

json load_config_file(const std::string& path, const char* origin) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError{2, std::string(origin) + " config file not readable: " + path};
  try {
    return json::parse(in);
  } catch (const std::exception& e) {
    throw CliError{2, std::string(origin) + " config file " + path + ": " + e.what()};
  }
}

// Fallback values for options the command line left unset: the file named by
// CREDSTUFF_CONFIG outranks the file named by --config.
struct ConfigLayer {
  json low;  // --config
  json mid;  // $CREDSTUFF_CONFIG

  void load(const std::string& config_flag_path) {
    if (!config_flag_path.empty()) low = load_config_file(config_flag_path, "--config");
    if (const char* env = std::getenv("CREDSTUFF_CONFIG"); env && *env) {
      mid = load_config_file(env, "CREDSTUFF_CONFIG");
    }
  }

  template <typename T>
  void fill(const CLI::Option* opt, const char* key, T& target) const {
    if (opt != nullptr && opt->count() > 0) return;
    const json* src = nullptr;
    if (mid.is_object() && mid.contains(key)) {
      src = &mid.at(key);
    } else if (low.is_object() && low.contains(key)) {
      src = &low.at(key);
    }
    if (src == nullptr) return;
    try {
      target = src->get<T>();
    } catch (const std::exception& e) {
      throw CliError{2, std::string("config key '") + key + "': " + e.what()};
    }
  }
};

// --- shared deployment parameters -------------------------------------------

constexpr const char* kDefaultKeyHex =
    "000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f";

struct DeployOpts {
  std::string key_hex = kDefaultKeyHex;
  std::string group_name = "p256";
  std::uint32_t buckets = 16;
  std::uint32_t bucket_size = 16;
  std::uint32_t fprint_bits = 32;

  CLI::Option *o_key = nullptr, *o_group = nullptr, *o_buckets = nullptr, *o_bucket_size = nullptr,
              *o_fprint_bits = nullptr;

  void add_to(CLI::App* cmd) {
    o_key = cmd->add_option("--key", key_hex, "deployment key (hex)");
    o_group = cmd->add_option("--group", group_name, "cipher group: tiny or p256")
                  ->check(CLI::IsMember({"tiny", "p256"}));
    o_buckets = cmd->add_option("--buckets", buckets, "filter bucket count (power of two)");
    o_bucket_size = cmd->add_option("--bucket-size", bucket_size, "slots per bucket");
    o_fprint_bits = cmd->add_option("--fprint-bits", fprint_bits, "fingerprint bits");
  }

  void overlay(const ConfigLayer& cfg) {
    cfg.fill(o_key, "key", key_hex);
    cfg.fill(o_group, "group", group_name);
    cfg.fill(o_buckets, "buckets", buckets);
    cfg.fill(o_bucket_size, "bucket-size", bucket_size);
    cfg.fill(o_fprint_bits, "fprint-bits", fprint_bits);
  }

  Bytes key() const {
    try {
      Bytes k = hex_decode(key_hex);
      if (k.empty()) throw std::invalid_argument("empty key");
      return k;
    } catch (const std::exception& e) {
      throw CliError{2, std::string("--key: ") + e.what()};
    }
  }

  crypto::GroupId group_id() const {
    return group_name == "tiny" ? crypto::GroupId::tiny : crypto::GroupId::p256;
  }
  const crypto::Group& group() const { return crypto::Group::by_id(group_id()); }

  cuckoo::FilterParams filter_params() const {
    if (fprint_bits < 1 || fprint_bits > 62) throw CliError{2, "--fprint-bits must be in 1..62"};
    cuckoo::FilterParams p;
    p.buckets = buckets;
    p.bucket_size = bucket_size;
    p.fprint_space = 1ull << fprint_bits;
    Digest32 d = sha256(key());
    std::copy(d.begin(), d.begin() + p.hash_key.size(), p.hash_key.begin());
    return p;
  }

  net::AccountHash account_hash(const std::string& account_id) const {
    return detect::account_salt(key(), account_id);
  }
};

detect::Policy parse_policy(const std::string& name) {
  if (name == "susp") return detect::Policy::susp;
  if (name == "susp-plus") return detect::Policy::susp_plus;
  throw CliError{2, "--policy must be susp or susp-plus"};
}

std::uint16_t parse_listen_port(const std::string& listen) {
  std::string portpart = listen;
  if (auto pos = listen.rfind(':'); pos != std::string::npos) portpart = listen.substr(pos + 1);
  try {
    unsigned long v = std::stoul(portpart);
    if (v > 65535) throw std::out_of_range("port");
    return static_cast<std::uint16_t>(v);
  } catch (const std::exception&) {
    throw CliError{2, "--listen: cannot parse port from '" + listen + "'"};
  }
}

void emit(const json& j) { std::cout << j.dump() << "\n" << std::flush; }

// --- local account stores ----------------------------------------------------

json read_store(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError{2, "account store not readable: " + path};
  try {
    return json::parse(in);
  } catch (const std::exception& e) {
    throw CliError{2, "account store " + path + ": " + e.what()};
  }
}

void write_store(const std::string& path, const json& j) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CliError{2, "cannot write account store: " + path};
    out << j.dump(2) << "\n";
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw CliError{2, "cannot replace account store: " + path};
  }
}

// --- serve -------------------------------------------------------------------

std::map<std::string, std::string> parse_members_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CliError{2, "members file not readable: " + path};
  std::map<std::string, std::string> members;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string member, address, extra;
    if (!(ls >> member) || member[0] == '#') continue;  // blank or comment
    ls >> address;  // optional; empty means any address
    if (ls >> extra) {
      throw CliError{2, "members file line " + std::to_string(lineno) +
                            ": expected 'member [address]', got extra token '" + extra + "'"};
    }
    if (!members.emplace(member, address).second) {
      throw CliError{2, "members file line " + std::to_string(lineno) + ": duplicate member '" +
                            member + "'"};
    }
  }
  if (members.empty()) throw CliError{2, "members file lists no members: " + path};
  return members;
}

struct ServeOpts {
  std::string role;
  std::string listen = ":7001";
  std::string members_path;
  std::string dir_addr;
  std::string member_id;
  std::string account_id;
  std::string store_path;
  std::string policy_name = "susp";
  std::uint32_t capacity = 101;
  double expire_days = 30.0;
  double rate_limit = 0;  // 0 = role default
  DeployOpts deploy;

  CLI::Option *o_listen = nullptr, *o_members = nullptr, *o_dir = nullptr, *o_member = nullptr,
              *o_account = nullptr, *o_store = nullptr, *o_policy = nullptr, *o_capacity = nullptr,
              *o_expire = nullptr, *o_rate = nullptr;
};

void run_serve_directory(const ServeOpts& opt) {
  if (opt.members_path.empty()) throw CliError{2, "--members is required for the directory role"};
  net::DirectoryConfig cfg;
  cfg.allowlist = parse_members_file(opt.members_path);
  cfg.params = opt.deploy.filter_params();
  cfg.group = opt.deploy.group_id();
  cfg.per_account_cap = opt.capacity == 101 ? 64 : opt.capacity;
  if (opt.rate_limit > 0) {
    cfg.escalate_rate = opt.rate_limit;
    cfg.escalate_burst = 2 * opt.rate_limit;
  }
  net::DirectoryServer server(cfg);
  server.start(parse_listen_port(opt.listen));
  emit({{"event", "listening"}, {"role", "directory"}, {"port", server.port()}});
  while (!g_signaled) std::this_thread::sleep_for(std::chrono::milliseconds(200));
  server.stop();
  emit({{"event", "stopped"}, {"role", "directory"}});
}

void run_serve_responder(const ServeOpts& opt) {
  if (opt.dir_addr.empty()) throw CliError{2, "--dir is required for the responder role"};
  if (opt.member_id.empty()) throw CliError{2, "--member is required for the responder role"};
  if (opt.account_id.empty()) throw CliError{2, "--account is required for the responder role"};

  net::ResponderConfig cfg;
  cfg.params = opt.deploy.filter_params();
  cfg.group = opt.deploy.group_id();
  if (opt.rate_limit > 0) {
    cfg.rate = opt.rate_limit;
    cfg.burst = 2 * opt.rate_limit;
  }
  net::ResponderServer server(cfg);

  const net::AccountHash acc = opt.deploy.account_hash(opt.account_id);
  const Bn& order = opt.deploy.group().order();
  SystemRng boot_rng;

  detect::SuspiciousSetConfig scfg;
  scfg.policy = parse_policy(opt.policy_name);
  scfg.filter = cfg.params;
  scfg.max_entries = opt.capacity;
  detect::SuspiciousSet set(opt.account_id, scfg, order, boot_rng);
  if (!opt.store_path.empty()) {
    if (std::ifstream probe(opt.store_path); probe.good()) {
      json store = read_store(opt.store_path);
      if (!store.contains("sset")) throw CliError{2, "store has no tracked-set snapshot"};
      try {
        set = detect::SuspiciousSet::load(hex_decode(store.at("sset").get<std::string>()), order);
      } catch (const std::exception& e) {
        throw CliError{2, std::string("tracked-set snapshot: ") + e.what()};
      }
    }
  }
  server.put_account(acc, std::move(set));
  server.start(opt.listen == ":7001" ? 0 : parse_listen_port(opt.listen));

  net::RegisterStatus st;
  try {
    st = net::register_remote(opt.dir_addr, {opt.member_id, server.address(), acc}, 5000);
  } catch (const net::NetError& e) {
    throw CliError{3, std::string("registration failed: ") + e.what()};
  }
  if (st != net::RegisterStatus::ok) {
    const char* names[] = {"ok", "duplicate_member", "limit_exceeded", "not_approved"};
    throw CliError{2, std::string("directory refused registration: ") +
                          names[static_cast<int>(st)]};
  }
  emit({{"event", "listening"},
        {"role", "responder"},
        {"port", server.port()},
        {"member", opt.member_id},
        {"registered", "ok"}});

  const auto expiration =
      static_cast<std::int64_t>(opt.expire_days * 86400.0);
  SystemRng rng;
  auto maintain = [&] {
    server.with_account(acc, [&](detect::SuspiciousSet& live) {
      live.expire(std::time(nullptr), expiration, rng);
      if (!opt.store_path.empty()) {
        json store;
        if (std::ifstream probe(opt.store_path); probe.good()) store = read_store(opt.store_path);
        store["account"] = opt.account_id;
        store["sset"] = hex_encode(live.save());
        write_store(opt.store_path, store);
      }
    });
  };

  int ticks = 0;
  while (!g_signaled) {
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
    if (++ticks % 5 == 0) maintain();
  }
  maintain();
  server.stop();
  emit({{"event", "stopped"}, {"role", "responder"}});
}

// --- login -------------------------------------------------------------------

struct LoginOpts {
  std::string account_id;
  std::string password;
  std::string set_password;
  std::string store_path;
  std::string dir_addr;
  std::string proxy;
  std::string member_id;
  std::string policy_name = "susp";
  std::uint32_t w = 2;
  std::uint32_t capacity = 101;
  double expire_days = 30.0;
  double ads_col = 0, ads_cnt = 0;
  bool force_col = false, force_cnt = false;
  std::uint64_t scrypt_n = 1 << 14;
  std::uint32_t scrypt_r = 8, scrypt_p = 1;
  std::uint64_t seed = 0;
  DeployOpts deploy;

  CLI::Option *o_password = nullptr, *o_set_password = nullptr, *o_dir = nullptr,
              *o_proxy = nullptr, *o_member = nullptr, *o_policy = nullptr, *o_w = nullptr,
              *o_capacity = nullptr, *o_expire = nullptr, *o_ads_col = nullptr,
              *o_ads_cnt = nullptr, *o_force_col = nullptr, *o_force_cnt = nullptr,
              *o_scrypt_n = nullptr, *o_seed = nullptr;
};

void run_login(const LoginOpts& opt) {
  const Bytes key = opt.deploy.key();
  const Digest32 salt = detect::account_salt(key, opt.account_id);
  const ScryptParams scrypt{opt.scrypt_n, opt.scrypt_r, opt.scrypt_p};
  const cuckoo::FilterParams params = opt.deploy.filter_params();
  const Bn& order = opt.deploy.group().order();

  std::unique_ptr<Rng> owned_rng;
  if (opt.o_seed != nullptr && opt.o_seed->count() > 0) {
    owned_rng = std::make_unique<SeededRng>(opt.seed);
  } else {
    owned_rng = std::make_unique<SystemRng>();
  }
  Rng& rng = *owned_rng;

  if (!opt.set_password.empty()) {
    const auto element = detect::password_element(salt, opt.set_password, scrypt);
    detect::SuspiciousSetConfig scfg;
    scfg.policy = parse_policy(opt.policy_name);
    scfg.filter = params;
    scfg.max_entries = opt.capacity;
    detect::SuspiciousSet fresh(opt.account_id, scfg, order, rng);
    json store;
    store["account"] = opt.account_id;
    store["truth"] = hex_encode(ByteView(element.data(), element.size()));
    store["sset"] = hex_encode(fresh.save());
    write_store(opt.store_path, store);
    emit({{"event", "password_set"}, {"account", opt.account_id}});
    return;
  }

  json store = read_store(opt.store_path);
  if (!store.contains("truth") || !store.contains("sset")) {
    throw CliError{2, "account store has no registered password; run --set-password first"};
  }
  const auto element = detect::password_element(salt, opt.password, scrypt);
  const std::string element_hex = hex_encode(ByteView(element.data(), element.size()));
  const bool correct = element_hex == store.at("truth").get<std::string>();

  detect::AdsVerdict verdict;
  if (opt.force_col || opt.force_cnt) {
    verdict = {opt.force_col, opt.force_cnt};
  } else {
    verdict = detect::ads_sample(opt.ads_col, opt.ads_cnt, rng);
  }

  detect::SuspiciousSet set = [&] {
    try {
      return detect::SuspiciousSet::load(hex_decode(store.at("sset").get<std::string>()), order);
    } catch (const std::exception& e) {
      throw CliError{2, std::string("tracked-set snapshot: ") + e.what()};
    }
  }();
  const std::int64_t now = std::time(nullptr);
  set.expire(now, static_cast<std::int64_t>(opt.expire_days * 86400.0), rng);
  set.observe_login(element, correct, verdict, now, rng);
  store["sset"] = hex_encode(set.save());
  write_store(opt.store_path, store);

  json report;
  report["account"] = opt.account_id;
  report["correct"] = correct;
  report["d_col"] = verdict.d_col;
  report["d_cnt"] = verdict.d_cnt;
  report["tracked"] = set.size();

  if (!(correct && verdict.d_cnt)) {
    report["phase"] = "collecting";
    emit(report);
    return;
  }

  if (opt.dir_addr.empty()) throw CliError{2, "--dir is required for the counting phase"};
  net::RequesterConfig rcfg;
  rcfg.directory = opt.dir_addr;
  rcfg.proxy = opt.proxy;
  rcfg.account = opt.deploy.account_hash(opt.account_id);
  rcfg.member_id = opt.member_id;
  rcfg.params = params;
  rcfg.group = opt.deploy.group_id();
  net::DirectoryChannel channel(rcfg);

  report["phase"] = "counting";
  try {
    detect::CountingDecision d = detect::counting_phase(element, correct, verdict, channel, opt.w);
    report["queried"] = d.queried;
    report["matches"] = d.matches;
    report["width"] = d.width;
    report["detected"] = d.detected;
    emit(report);
  } catch (const detect::DirectoryUnavailable& e) {
    // Fail-open: the login proceeds undetected when the poll cannot run, so
    // the outage is reported loudly instead of silently swallowed.
    report["error"] = "directory_unavailable";
    report["detail"] = e.what();
    report["fail_open"] = true;
    emit(report);
    throw CliError{3, std::string("counting phase unavailable: ") + e.what()};
  }
}

// --- sim ---------------------------------------------------------------------

struct SimCommon {
  std::uint32_t n = 1, passwords = 2, w = 1;
  double zipf = 1.0;
  std::uint64_t max_states = 10'000'000;
  bool mc = false;
  std::uint64_t trials = 100'000;
  std::uint64_t seed = 0;
  CLI::Option* o_seed = nullptr;

  std::unique_ptr<Rng> make_rng() const {
    if (o_seed != nullptr && o_seed->count() > 0) return std::make_unique<SeededRng>(seed);
    return std::make_unique<SystemRng>();
  }
};

json mc_json(const sim::McEstimate& est) {
  json j;
  j["mode"] = "mc";
  j["trials"] = est.trials;
  j["estimate"] = est.defined ? json(est.estimate) : json();
  j["ci95"] = est.defined ? json(est.ci95) : json();
  j["defined"] = est.defined;
  j["e_accessed"] = est.e_accessed;
  j["e_detected"] = est.e_detected;
  return j;
}

void run_sim_fdr(const SimCommon& c, double fpr_col, double fpr_cnt, const std::string& policy) {
  sim::FdrConfig cfg;
  cfg.n = c.n;
  cfg.passwords = c.passwords;
  cfg.s = c.zipf;
  cfg.w = c.w;
  cfg.fpr_col = fpr_col;
  cfg.fpr_cnt = fpr_cnt;
  cfg.max_states = c.max_states;
  json j;
  j["experiment"] = "fdr";
  j["n"] = cfg.n;
  j["passwords"] = cfg.passwords;
  j["zipf"] = cfg.s;
  j["w"] = cfg.w;
  j["fpr_col"] = cfg.fpr_col;
  j["fpr_cnt"] = cfg.fpr_cnt;
  if (c.mc) {
    auto rng = c.make_rng();
    sim::FdrPolicy pol =
        policy == "timid" ? sim::FdrPolicy::timid : sim::FdrPolicy::greedy_plant;
    j.update(mc_json(sim::mc_fdr(cfg, pol, c.trials, *rng)));
    j["policy"] = policy;
  } else {
    sim::MdpSolution sol = sim::solve_fdr(cfg);
    j["mode"] = "exact";
    j["fdr"] = sol.value;
    j["states"] = sol.states;
  }
  emit(j);
}

void run_sim_tdr(const SimCommon& c, double tpr_col, double tpr_cnt,
                 const std::vector<std::uint32_t>& twofa, const std::string& policy) {
  sim::TdrConfig cfg;
  cfg.n = c.n;
  cfg.passwords = c.passwords;
  cfg.s = c.zipf;
  cfg.w = c.w;
  cfg.has2fa = twofa;
  cfg.tpr_col = tpr_col;
  cfg.tpr_cnt = tpr_cnt;
  cfg.max_states = c.max_states;
  json j;
  j["experiment"] = "tdr";
  j["n"] = cfg.n;
  j["passwords"] = cfg.passwords;
  j["zipf"] = cfg.s;
  j["w"] = cfg.w;
  j["twofa"] = cfg.has2fa;
  j["tpr_col"] = cfg.tpr_col;
  j["tpr_cnt"] = cfg.tpr_cnt;
  if (c.mc) {
    auto rng = c.make_rng();
    sim::TdrPolicy pol =
        policy == "matches-first" ? sim::TdrPolicy::matches_first : sim::TdrPolicy::sweep_once;
    j.update(mc_json(sim::mc_tdr(cfg, pol, c.trials, *rng)));
    j["policy"] = policy;
  } else {
    sim::MdpSolution sol = sim::solve_tdr(cfg);
    j["mode"] = "exact";
    j["tdr"] = sol.ratio_defined ? json(sol.value) : json();
    j["defined"] = sol.ratio_defined;
    j["e_accessed"] = sol.e_accessed;
    j["e_detected"] = sol.e_detected;
    j["states"] = sol.states;
  }
  emit(j);
}

void run_sim_roc(const SimCommon& c, const std::string& preset, std::uint32_t w_min,
                 std::uint32_t w_max, double fpr_cnt, double tpr_cnt,
                 const std::vector<std::string>& point_specs, const CLI::App* cmd) {
  sim::RocConfig cfg;  // defaults are the phishing-baseline preset
  if (preset != "phishing-baseline") {
    throw CliError{2, "unknown preset '" + preset + "' (available: phishing-baseline)"};
  }
  auto set_if = [&](const char* flag, auto& dst, const auto& src) {
    if (cmd->count(flag) > 0) dst = src;
  };
  set_if("--n", cfg.n, c.n);
  set_if("--pwds", cfg.passwords, c.passwords);
  set_if("--zipf", cfg.s, c.zipf);
  set_if("--max-states", cfg.max_states, c.max_states);
  cfg.w_min = w_min;
  cfg.w_max = w_max;
  set_if("--fpr-cnt", cfg.fpr_cnt, fpr_cnt);
  set_if("--tpr-cnt", cfg.tpr_cnt, tpr_cnt);
  if (!point_specs.empty()) {
    cfg.ads_points.clear();
    for (const std::string& spec : point_specs) {
      auto pos = spec.find(':');
      if (pos == std::string::npos) {
        throw CliError{2, "--point expects fpr:tpr, got '" + spec + "'"};
      }
      try {
        cfg.ads_points.emplace_back(std::stod(spec.substr(0, pos)),
                                    std::stod(spec.substr(pos + 1)));
      } catch (const std::exception&) {
        throw CliError{2, "--point expects fpr:tpr, got '" + spec + "'"};
      }
    }
  }
  std::cout << sim::roc_csv(sim::roc_sweep(cfg)) << std::flush;
}

// --- bench -------------------------------------------------------------------

struct BenchOpts {
  std::vector<std::uint32_t> ell = {128};
  std::uint32_t responders = 4;
  std::uint32_t queries = 10;
  std::uint32_t inflight = 1;
  int responder_timeout_ms = 10'000;
  int batch_timeout_ms = 120'000;
  std::uint64_t seed = 0;
  DeployOpts deploy;
  CLI::Option* o_seed = nullptr;
};

void run_bench(const BenchOpts& opt) {
  if (opt.ell.empty()) throw CliError{2, "--ell needs at least one set size"};
  if (opt.responders < 1) throw CliError{2, "--n must be at least 1"};
  if (opt.queries < 1) throw CliError{2, "--queries must be at least 1"};
  if (opt.inflight < 1) throw CliError{2, "--inflight must be at least 1"};

  const Bn& order = opt.deploy.group().order();
  const net::AccountHash acc = opt.deploy.account_hash("bench");
  SeededRng fill_rng(opt.o_seed != nullptr && opt.o_seed->count() > 0 ? opt.seed : 0x6e3cull);

  for (std::uint32_t ell : opt.ell) {
    cuckoo::FilterParams params = opt.deploy.filter_params();
    params.buckets = cuckoo::FilterParams::buckets_for_capacity(ell, params.bucket_size);

    // One tracked set holding ell elements, copied into every responder.
    detect::SuspiciousSetConfig scfg;
    scfg.filter = params;
    scfg.max_entries = ell + 1;
    detect::SuspiciousSet filled("bench", scfg, order, fill_rng);
    detect::AdsVerdict plant_verdict{true, false};
    for (std::uint32_t i = 0; i < ell; ++i) {
      Bytes elem(32);
      fill_rng.fill(elem.data(), elem.size());
      filled.observe_login(elem, false, plant_verdict, static_cast<std::int64_t>(i), fill_rng);
    }

    net::ResponderConfig rcfg;
    rcfg.params = params;
    rcfg.group = opt.deploy.group_id();
    rcfg.rate = 1e6;  // benchmarking: never throttle
    rcfg.burst = 1e6;
    std::vector<std::unique_ptr<net::ResponderServer>> servers;
    net::DirectoryConfig dcfg;
    dcfg.params = params;
    dcfg.group = opt.deploy.group_id();
    dcfg.responder_timeout_ms = opt.responder_timeout_ms;
    dcfg.batch_timeout_ms = opt.batch_timeout_ms;
    dcfg.escalate_rate = 1e6;
    dcfg.escalate_burst = 1e6;
    for (std::uint32_t i = 0; i < opt.responders; ++i) dcfg.allowlist["m" + std::to_string(i)] = "";
    net::DirectoryServer dir(dcfg);
    dir.start();
    for (std::uint32_t i = 0; i < opt.responders; ++i) {
      auto server = std::make_unique<net::ResponderServer>(rcfg);
      server->put_account(acc, filled);
      server->start();
      if (dir.register_member("m" + std::to_string(i), server->address(), acc) !=
          net::RegisterStatus::ok) {
        throw CliError{2, "bench registration failed"};
      }
      servers.push_back(std::move(server));
    }

    net::RequesterConfig qcfg;
    qcfg.directory = "127.0.0.1:" + std::to_string(dir.port());
    qcfg.account = acc;
    qcfg.params = params;
    qcfg.group = opt.deploy.group_id();
    qcfg.timeout_ms = opt.batch_timeout_ms + 5000;

    std::mutex results_mu;
    std::vector<double> rtt_ms;
    std::uint64_t responses = 0, timeouts = 0;
    std::atomic<std::uint32_t> next{0};
    auto worker = [&](std::uint64_t worker_seed) {
      SeededRng rng(worker_seed);
      while (true) {
        if (next.fetch_add(1) >= opt.queries) return;
        Bytes elem(32);
        rng.fill(elem.data(), elem.size());
        auto t0 = std::chrono::steady_clock::now();
        net::PollOutcome out = net::poll_responders(qcfg, elem, rng);
        auto t1 = std::chrono::steady_clock::now();
        std::lock_guard<std::mutex> lk(results_mu);
        rtt_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        responses += out.votes.size();
        timeouts += out.timeouts;
      }
    };

    auto bench_t0 = std::chrono::steady_clock::now();
    std::vector<std::thread> threads;
    for (std::uint32_t i = 0; i < opt.inflight; ++i) {
      threads.emplace_back(worker, 0x10c0ull + i);
    }
    for (auto& t : threads) t.join();
    auto bench_t1 = std::chrono::steady_clock::now();
    double elapsed_s = std::chrono::duration<double>(bench_t1 - bench_t0).count();

    std::sort(rtt_ms.begin(), rtt_ms.end());
    auto quantile = [&](double q) {
      if (rtt_ms.empty()) return 0.0;
      std::size_t idx = static_cast<std::size_t>(q * (rtt_ms.size() - 1) + 0.5);
      return rtt_ms[std::min(idx, rtt_ms.size() - 1)];
    };
    emit({{"event", "bench_point"},
          {"ell", ell},
          {"n", opt.responders},
          {"buckets", params.buckets},
          {"queries", rtt_ms.size()},
          {"inflight", opt.inflight},
          {"median_ms", quantile(0.5)},
          {"p95_ms", quantile(0.95)},
          {"timeouts", timeouts},
          {"responses_per_sec", elapsed_s > 0 ? responses / elapsed_s : 0.0}});

    for (auto& server : servers) server->stop();
    dir.stop();
  }
  // Reference point for judging throughput headroom: a public estimate of
  // combined U.S. login traffic is about 660 queries per second.
  emit({{"event", "context"}, {"industry_load_qps", 660}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"credential-stuffing defense toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file providing flag defaults");

  ConfigLayer layer;

  // serve ---------------------------------------------------------------
  ServeOpts serve;
  CLI::App* c_serve = app.add_subcommand("serve", "run a directory or responder process");
  c_serve->add_option("--role", serve.role, "directory or responder")
      ->required()
      ->check(CLI::IsMember({"directory", "responder"}));
  serve.o_listen = c_serve->add_option("--listen", serve.listen, "listen port, e.g. :7001");
  serve.o_members = c_serve->add_option("--members", serve.members_path,
                                        "allowlist file: one 'member [address]' per line");
  serve.o_dir = c_serve->add_option("--dir", serve.dir_addr, "directory address host:port");
  serve.o_member = c_serve->add_option("--member", serve.member_id, "this responder's member id");
  serve.o_account = c_serve->add_option("--account", serve.account_id, "account id served");
  serve.o_store = c_serve->add_option("--store", serve.store_path, "tracked-set snapshot file");
  serve.o_policy = c_serve->add_option("--policy", serve.policy_name, "susp or susp-plus")
                       ->check(CLI::IsMember({"susp", "susp-plus"}));
  serve.o_capacity = c_serve->add_option("--capacity", serve.capacity,
                                         "tracked-set cap (responder) / member cap (directory)");
  serve.o_expire = c_serve->add_option("--expire-days", serve.expire_days, "entry expiration");
  serve.o_rate = c_serve->add_option("--rate-limit", serve.rate_limit, "tokens per second");
  serve.deploy.add_to(c_serve);
  c_serve->callback([&] {
    layer.load(config_path);
    layer.fill(serve.o_listen, "listen", serve.listen);
    layer.fill(serve.o_members, "members", serve.members_path);
    layer.fill(serve.o_dir, "dir", serve.dir_addr);
    layer.fill(serve.o_member, "member", serve.member_id);
    layer.fill(serve.o_account, "account", serve.account_id);
    layer.fill(serve.o_store, "store", serve.store_path);
    layer.fill(serve.o_policy, "policy", serve.policy_name);
    layer.fill(serve.o_capacity, "capacity", serve.capacity);
    layer.fill(serve.o_expire, "expire-days", serve.expire_days);
    layer.fill(serve.o_rate, "rate-limit", serve.rate_limit);
    serve.deploy.overlay(layer);
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    if (serve.role == "directory") {
      run_serve_directory(serve);
    } else {
      run_serve_responder(serve);
    }
  });

  // login ---------------------------------------------------------------
  LoginOpts login;
  CLI::App* c_login = app.add_subcommand("login", "process one login attempt");
  c_login->add_option("--account", login.account_id, "account id")->required();
  c_login->add_option("--store", login.store_path, "local account store (JSON)")->required();
  login.o_password = c_login->add_option("--password", login.password, "password attempted");
  login.o_set_password =
      c_login->add_option("--set-password", login.set_password, "register the true password");
  login.o_dir = c_login->add_option("--dir", login.dir_addr, "directory address host:port");
  login.o_proxy = c_login->add_option("--proxy", login.proxy, "SOCKS5 proxy host:port");
  login.o_member = c_login->add_option("--member", login.member_id, "own member id (self-exclusion)");
  login.o_policy = c_login->add_option("--policy", login.policy_name, "susp or susp-plus")
                       ->check(CLI::IsMember({"susp", "susp-plus"}));
  login.o_w = c_login->add_option("--w", login.w, "attack-width threshold");
  login.o_capacity = c_login->add_option("--capacity", login.capacity, "tracked-set cap");
  login.o_expire = c_login->add_option("--expire-days", login.expire_days, "entry expiration");
  login.o_ads_col = c_login->add_option("--ads-col", login.ads_col, "detector d_col rate");
  login.o_ads_cnt = c_login->add_option("--ads-cnt", login.ads_cnt, "detector d_cnt rate");
  login.o_force_col = c_login->add_flag("--force-col", login.force_col, "force d_col = true");
  login.o_force_cnt = c_login->add_flag("--force-cnt", login.force_cnt, "force d_cnt = true");
  login.o_scrypt_n = c_login->add_option("--scrypt-n", login.scrypt_n, "scrypt cost parameter");
  login.o_seed = c_login->add_option("--seed", login.seed, "deterministic randomness");
  login.deploy.add_to(c_login);
  c_login->callback([&] {
    layer.load(config_path);
    layer.fill(login.o_dir, "dir", login.dir_addr);
    layer.fill(login.o_proxy, "proxy", login.proxy);
    layer.fill(login.o_member, "member", login.member_id);
    layer.fill(login.o_policy, "policy", login.policy_name);
    layer.fill(login.o_w, "w", login.w);
    layer.fill(login.o_capacity, "capacity", login.capacity);
    layer.fill(login.o_expire, "expire-days", login.expire_days);
    layer.fill(login.o_ads_col, "ads-col", login.ads_col);
    layer.fill(login.o_ads_cnt, "ads-cnt", login.ads_cnt);
    layer.fill(login.o_scrypt_n, "scrypt-n", login.scrypt_n);
    login.deploy.overlay(layer);
    if (login.set_password.empty() && login.password.empty() &&
        login.o_password->count() == 0) {
      throw CliError{2, "provide --password or --set-password"};
    }
    run_login(login);
  });

  // sim -----------------------------------------------------------------
  CLI::App* c_sim = app.add_subcommand("sim", "detection-rate experiments");
  c_sim->require_subcommand(1);

  SimCommon fdr_common;
  double fdr_fpr_col = 0, fdr_fpr_cnt = 0;
  std::string fdr_policy = "greedy";
  CLI::App* c_fdr = c_sim->add_subcommand("fdr", "false-detection rate");
  CLI::Option* fo_n = c_fdr->add_option("--n", fdr_common.n, "responder sites");
  CLI::Option* fo_p = c_fdr->add_option("--pwds", fdr_common.passwords, "password pool size");
  CLI::Option* fo_z = c_fdr->add_option("--zipf", fdr_common.zipf, "Zipf shape");
  CLI::Option* fo_w = c_fdr->add_option("--w", fdr_common.w, "attack-width threshold");
  c_fdr->add_option("--fpr-col", fdr_fpr_col, "collection-signal false-positive rate")
      ->required();
  c_fdr->add_option("--fpr-cnt", fdr_fpr_cnt, "counting-signal false-positive rate")->required();
  CLI::Option* fo_ms = c_fdr->add_option("--max-states", fdr_common.max_states, "solver budget");
  c_fdr->add_flag("--mc", fdr_common.mc, "Monte Carlo instead of the exact solver");
  CLI::Option* fo_t = c_fdr->add_option("--trials", fdr_common.trials, "Monte Carlo trials");
  fdr_common.o_seed = c_fdr->add_option("--seed", fdr_common.seed, "deterministic randomness");
  c_fdr->add_option("--policy", fdr_policy, "mc policy: greedy or timid")
      ->check(CLI::IsMember({"greedy", "timid"}));
  c_fdr->callback([&] {
    layer.load(config_path);
    layer.fill(fo_n, "n", fdr_common.n);
    layer.fill(fo_p, "pwds", fdr_common.passwords);
    layer.fill(fo_z, "zipf", fdr_common.zipf);
    layer.fill(fo_w, "w", fdr_common.w);
    layer.fill(fo_ms, "max-states", fdr_common.max_states);
    layer.fill(fo_t, "trials", fdr_common.trials);
    run_sim_fdr(fdr_common, fdr_fpr_col, fdr_fpr_cnt, fdr_policy);
  });

  SimCommon tdr_common;
  double tdr_tpr_col = 0.61, tdr_tpr_cnt = 0.95;
  std::vector<std::uint32_t> tdr_twofa;
  std::string tdr_policy = "sweep";
  CLI::App* c_tdr = c_sim->add_subcommand("tdr", "true-detection rate");
  CLI::Option* to_n = c_tdr->add_option("--n", tdr_common.n, "responder sites");
  CLI::Option* to_p = c_tdr->add_option("--pwds", tdr_common.passwords, "password pool size");
  CLI::Option* to_z = c_tdr->add_option("--zipf", tdr_common.zipf, "Zipf shape");
  CLI::Option* to_w = c_tdr->add_option("--w", tdr_common.w, "attack-width threshold");
  CLI::Option* to_tc = c_tdr->add_option("--tpr-col", tdr_tpr_col, "collection-signal rate");
  CLI::Option* to_tn = c_tdr->add_option("--tpr-cnt", tdr_tpr_cnt, "counting-signal rate");
  CLI::Option* to_2fa =
      c_tdr->add_option("--twofa", tdr_twofa, "site indices with second-factor challenges")
          ->delimiter(',');
  CLI::Option* to_ms = c_tdr->add_option("--max-states", tdr_common.max_states, "solver budget");
  c_tdr->add_flag("--mc", tdr_common.mc, "Monte Carlo instead of the exact solver");
  CLI::Option* to_t = c_tdr->add_option("--trials", tdr_common.trials, "Monte Carlo trials");
  tdr_common.o_seed = c_tdr->add_option("--seed", tdr_common.seed, "deterministic randomness");
  c_tdr->add_option("--policy", tdr_policy, "mc policy: sweep or matches-first")
      ->check(CLI::IsMember({"sweep", "matches-first"}));
  c_tdr->callback([&] {
    layer.load(config_path);
    layer.fill(to_n, "n", tdr_common.n);
    layer.fill(to_p, "pwds", tdr_common.passwords);
    layer.fill(to_z, "zipf", tdr_common.zipf);
    layer.fill(to_w, "w", tdr_common.w);
    layer.fill(to_tc, "tpr-col", tdr_tpr_col);
    layer.fill(to_tn, "tpr-cnt", tdr_tpr_cnt);
    layer.fill(to_2fa, "twofa", tdr_twofa);
    layer.fill(to_ms, "max-states", tdr_common.max_states);
    layer.fill(to_t, "trials", tdr_common.trials);
    run_sim_tdr(tdr_common, tdr_tpr_col, tdr_tpr_cnt, tdr_twofa, tdr_policy);
  });

  SimCommon roc_common;
  roc_common.n = 5;
  std::string roc_preset = "phishing-baseline";
  std::uint32_t roc_w_min = 1, roc_w_max = 5;
  double roc_fpr_cnt = 0.30, roc_tpr_cnt = 0.95;
  std::vector<std::string> roc_points;
  CLI::App* c_roc = c_sim->add_subcommand("roc", "detection trade-off sweep (CSV)");
  c_roc->add_option("--preset", roc_preset, "parameter preset");
  c_roc->add_option("--n", roc_common.n, "responder sites");
  c_roc->add_option("--pwds", roc_common.passwords, "password pool size");
  c_roc->add_option("--zipf", roc_common.zipf, "Zipf shape");
  c_roc->add_option("--w-min", roc_w_min, "smallest threshold");
  c_roc->add_option("--w-max", roc_w_max, "largest threshold");
  c_roc->add_option("--fpr-cnt", roc_fpr_cnt, "counting-signal false-positive rate");
  c_roc->add_option("--tpr-cnt", roc_tpr_cnt, "counting-signal true-positive rate");
  c_roc->add_option("--point", roc_points, "detector operating point fpr:tpr (repeatable)");
  c_roc->add_option("--max-states", roc_common.max_states, "solver budget");
  c_roc->callback([&] {
    layer.load(config_path);
    run_sim_roc(roc_common, roc_preset, roc_w_min, roc_w_max, roc_fpr_cnt, roc_tpr_cnt, roc_points,
                c_roc);
  });

  // bench ---------------------------------------------------------------
  BenchOpts bench;
  CLI::App* c_bench = app.add_subcommand("bench", "loopback latency and throughput");
  c_bench->add_option("--ell", bench.ell, "tracked-set sizes to measure")->delimiter(',');
  c_bench->add_option("--n", bench.responders, "responder count");
  c_bench->add_option("--queries", bench.queries, "queries per grid point");
  c_bench->add_option("--inflight", bench.inflight, "concurrent closed-loop requesters");
  c_bench->add_option("--responder-timeout-ms", bench.responder_timeout_ms, "per-responder budget");
  c_bench->add_option("--batch-timeout-ms", bench.batch_timeout_ms, "whole-batch budget");
  bench.o_seed = c_bench->add_option("--seed", bench.seed, "deterministic elements");
  bench.deploy.add_to(c_bench);
  c_bench->callback([&] {
    layer.load(config_path);
    bench.deploy.overlay(layer);
    run_bench(bench);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const CliError& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.code;
  } catch (const sim::StateSpaceTooLarge& e) {
    std::cerr << "error: " << e.what()
              << "; rerun with --mc --trials N for a Monte Carlo estimate\n";
    return 2;
  } catch (const net::ProtocolError& e) {
    std::cerr << "protocol error: " << e.what() << "\n";
    return 4;
  } catch (const pmt::MalformedQuery& e) {
    std::cerr << "protocol error: " << e.what() << "\n";
    return 4;
  } catch (const pmt::MalformedResponse& e) {
    std::cerr << "protocol error: " << e.what() << "\n";
    return 4;
  } catch (const detect::DirectoryUnavailable& e) {
    std::cerr << "network error: " << e.what() << "\n";
    return 3;
  } catch (const net::NetError& e) {
    std::cerr << "network error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
