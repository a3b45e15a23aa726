#include "lsac/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace lsac::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return d;
  } catch (const std::exception&) {
    throw ParseError("config: key '" + key + "': cannot parse '" + v + "' as real");
  }
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
  // Accept scientific notation for counts (e.g. total_steps = 5e4).
  const double d = parse_double(key, v);
  const double r = std::round(d);
  if (!std::isfinite(d) || std::abs(d - r) > 1e-9 || std::abs(r) > 9.2e18)
    throw ParseError("config: key '" + key + "': '" + v + "' is not an integer");
  return static_cast<std::int64_t>(r);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParseError("config: key '" + key + "': cannot parse '" + v + "' as bool");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(static_cast<T>(parse_int(key, item)));
  }
  if (out.empty()) throw ParseError("config: key '" + key + "': empty list");
  return out;
}

std::string fmt_double(double d) {
  if (std::isnan(d)) return "nan";
  if (std::isinf(d)) return d > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), d);
  return std::string(buf, res.ptr);
}

template <typename T>
std::string fmt_list(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

struct KeyHandler {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

using Table = std::vector<std::pair<std::string, KeyHandler>>;

#define KEY_STR(name, field)                                              \
  {name, {[](RunConfig& c, const std::string& v) { c.field = v; },        \
          [](const RunConfig& c) { return c.field; }}}
#define KEY_DOUBLE(name, field)                                           \
  {name, {[](RunConfig& c, const std::string& v) { c.field = parse_double(name, v); }, \
          [](const RunConfig& c) { return fmt_double(c.field); }}}
#define KEY_INT(name, field, type)                                        \
  {name, {[](RunConfig& c, const std::string& v) { c.field = static_cast<type>(parse_int(name, v)); }, \
          [](const RunConfig& c) { return std::to_string(c.field); }}}
#define KEY_BOOL(name, field)                                             \
  {name, {[](RunConfig& c, const std::string& v) { c.field = parse_bool(name, v); }, \
          [](const RunConfig& c) { return c.field ? "true" : "false"; }}}
#define KEY_LIST(name, field, type)                                       \
  {name, {[](RunConfig& c, const std::string& v) { c.field = parse_list<type>(name, v); }, \
          [](const RunConfig& c) { return fmt_list(c.field); }}}

const Table& table() {
  static const Table t = {
      KEY_STR("env", env),
      KEY_STR("maze_file", maze_file),
      KEY_STR("out_dir", out_dir),
      KEY_LIST("seeds", seeds, std::uint64_t),
      KEY_INT("parallel_runs", parallel_runs, int),
      KEY_INT("total_steps", total_steps, std::int64_t),
      KEY_INT("steps_per_iteration", steps_per_iteration, std::int64_t),
      KEY_INT("updates_per_iteration", updates_per_iteration, std::int64_t),
      KEY_INT("warmup_random_steps", warmup_random_steps, std::int64_t),
      KEY_DOUBLE("gamma", gamma),
      KEY_DOUBLE("tau", tau),
      KEY_INT("batch", batch, Index),
      KEY_DOUBLE("mix_ratio", mix_ratio),
      KEY_INT("n_critics", n_critics, Index),
      KEY_INT("replay_capacity", replay_capacity, Index),
      KEY_INT("diffusion_capacity", diffusion_capacity, Index),
      KEY_INT("diffusion_period", diffusion_period, std::int64_t),
      KEY_INT("refill_count", refill_count, Index),
      KEY_INT("eval_period", eval_period, std::int64_t),
      KEY_INT("eval_episodes", eval_episodes, int),
      KEY_INT("qbias_episodes", qbias_episodes, int),
      KEY_BOOL("dump_buffers", dump_buffers),
      KEY_LIST("critic_hidden", critic_hidden, Index),
      KEY_LIST("policy_hidden", policy_hidden, Index),
      KEY_DOUBLE("eps_sigma", eps_sigma),
      KEY_DOUBLE("alpha_init", alpha_init),
      KEY_DOUBLE("alpha_lr", alpha_lr),
      KEY_DOUBLE("target_entropy", target_entropy),
      KEY_DOUBLE("policy_lr", policy_lr),
      KEY_DOUBLE("policy_clip", policy_clip),
      KEY_DOUBLE("clip_tau", clip_tau),
      KEY_DOUBLE("kappa_b", kappa_b),
      KEY_DOUBLE("eta_init", sgld.eta_init),
      KEY_DOUBLE("eta_final", sgld.eta_final),
      KEY_INT("warmup_steps", sgld.warmup_steps, std::int64_t),
      KEY_INT("anneal_steps", sgld.anneal_steps, std::int64_t),
      KEY_DOUBLE("bias_a", sgld.a),
      KEY_DOUBLE("beta_Q", sgld.beta_q),
      KEY_DOUBLE("alpha1", sgld.alpha1),
      KEY_DOUBLE("alpha2", sgld.alpha2),
      KEY_DOUBLE("lambda", sgld.lambda),
      KEY_DOUBLE("clip_norm", sgld.clip_norm),
      KEY_INT("diffusion_T", diffusion_T, int),
      KEY_DOUBLE("beta_min", beta_min),
      KEY_DOUBLE("beta_max", beta_max),
      KEY_LIST("denoiser_hidden", denoiser_hidden, Index),
      KEY_INT("denoiser_emb", denoiser_emb, Index),
      KEY_INT("denoiser_train_steps", denoiser_train_steps, int),
      KEY_INT("denoiser_batch", denoiser_batch, Index),
      KEY_DOUBLE("denoiser_lr", denoiser_lr),
      KEY_DOUBLE("refine_lr", refine.beta_a),
      KEY_DOUBLE("refine_m1", refine.m1),
      KEY_DOUBLE("refine_m2", refine.m2),
      KEY_INT("refine_steps", refine.steps, int),
      KEY_BOOL("standard_critic", standard_critic),
      KEY_BOOL("no_refine", no_refine),
      KEY_BOOL("no_diffusion", no_diffusion),
      KEY_STR("sampler", sampler),
  };
  return t;
}

#undef KEY_STR
#undef KEY_DOUBLE
#undef KEY_INT
#undef KEY_BOOL
#undef KEY_LIST

const KeyHandler* find_key(const std::string& key) {
  for (const auto& [name, h] : table())
    if (name == key) return &h;
  return nullptr;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, h] : table()) k.push_back(name);
    return k;
  }();
  return keys;
}

void apply_kv(RunConfig& cfg, const std::string& key, const std::string& value) {
  const KeyHandler* h = find_key(key);
  if (!h) throw ParseError("config: unknown key '" + key + "'");
  h->set(cfg, trim(value));
}

RunConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("config: cannot open " + path.string());
  RunConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("config: " + path.string() + ":" + std::to_string(line_no) +
                       ": expected key = value");
    apply_kv(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

void apply_overrides(RunConfig& cfg,
                     const std::vector<std::pair<std::string, std::string>>& kvs) {
  for (const auto& [k, v] : kvs) apply_kv(cfg, k, v);
}

void validate(const RunConfig& cfg) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ParseError("config: " + what);
  };
  require(cfg.env == "pendulum" || cfg.env == "maze", "env must be pendulum|maze");
  require(cfg.sampler == "asgld" || cfg.sampler == "adam", "sampler must be asgld|adam");
  require(!cfg.seeds.empty(), "seeds must be non-empty");
  require(cfg.parallel_runs >= 1, "parallel_runs must be >= 1");
  require(cfg.total_steps > 0, "total_steps must be positive");
  require(cfg.steps_per_iteration > 0, "steps_per_iteration must be positive");
  require(cfg.updates_per_iteration > 0, "updates_per_iteration must be positive");
  require(cfg.warmup_random_steps >= 0, "warmup_random_steps must be >= 0");
  require(cfg.gamma > 0.0 && cfg.gamma < 1.0, "gamma must lie in (0,1)");
  require(cfg.tau > 0.0 && cfg.tau <= 1.0, "tau must lie in (0,1]");
  require(cfg.batch > 0, "batch must be positive");
  require(cfg.mix_ratio >= 0.0 && cfg.mix_ratio <= 1.0, "mix_ratio must lie in [0,1]");
  require(cfg.n_critics >= 1, "n_critics must be >= 1");
  require(cfg.replay_capacity > 0, "replay_capacity must be positive");
  require(cfg.diffusion_capacity > 0, "diffusion_capacity must be positive");
  require(cfg.diffusion_period > 0, "diffusion_period must be positive");
  require(cfg.refill_count > 0, "refill_count must be positive");
  require(cfg.eval_period > 0, "eval_period must be positive");
  require(cfg.eval_episodes >= 1, "eval_episodes must be >= 1");
  require(cfg.qbias_episodes >= 1, "qbias_episodes must be >= 1");
  for (Index h : cfg.critic_hidden) require(h > 0, "critic_hidden entries must be positive");
  for (Index h : cfg.policy_hidden) require(h > 0, "policy_hidden entries must be positive");
  for (Index h : cfg.denoiser_hidden)
    require(h > 0, "denoiser_hidden entries must be positive");
  require(cfg.eps_sigma > 0.0, "eps_sigma must be positive");
  require(cfg.alpha_init > 0.0, "alpha_init must be positive");
  require(cfg.alpha_lr > 0.0, "alpha_lr must be positive");
  require(cfg.policy_lr > 0.0, "policy_lr must be positive");
  require(cfg.policy_clip > 0.0, "policy_clip must be positive");
  require(cfg.clip_tau >= 0.0 && cfg.clip_tau <= 1.0, "clip_tau must lie in [0,1]");
  require(cfg.kappa_b > 0.0, "kappa_b must be positive");
  require(cfg.sgld.eta_init > 0.0 && cfg.sgld.eta_final > 0.0,
          "eta_init and eta_final must be positive");
  require(cfg.sgld.warmup_steps >= 0, "warmup_steps must be >= 0");
  require(cfg.sgld.anneal_steps > 0, "anneal_steps must be positive");
  require(cfg.sgld.a >= 0.0, "bias_a must be >= 0");
  require(cfg.sgld.beta_q > 0.0, "beta_Q must be positive");
  require(cfg.sgld.alpha1 >= 0.0 && cfg.sgld.alpha1 < 1.0, "alpha1 must lie in [0,1)");
  require(cfg.sgld.alpha2 >= 0.0 && cfg.sgld.alpha2 < 1.0, "alpha2 must lie in [0,1)");
  require(cfg.sgld.lambda > 0.0, "lambda must be positive");
  require(cfg.sgld.clip_norm > 0.0, "clip_norm must be positive");
  require(cfg.diffusion_T >= 1, "diffusion_T must be >= 1");
  require(cfg.beta_min > 0.0 && cfg.beta_min <= cfg.beta_max && cfg.beta_max < 1.0,
          "need 0 < beta_min <= beta_max < 1");
  require(cfg.denoiser_emb >= 2 && cfg.denoiser_emb % 2 == 0,
          "denoiser_emb must be even and >= 2");
  require(cfg.denoiser_train_steps > 0, "denoiser_train_steps must be positive");
  require(cfg.denoiser_batch > 0, "denoiser_batch must be positive");
  require(cfg.denoiser_lr > 0.0, "denoiser_lr must be positive");
  require(cfg.refine.beta_a >= 0.0, "refine_lr must be >= 0");
  require(cfg.refine.m1 >= 0.0 && cfg.refine.m1 < 1.0, "refine_m1 must lie in [0,1)");
  require(cfg.refine.m2 >= 0.0 && cfg.refine.m2 < 1.0, "refine_m2 must lie in [0,1)");
  require(cfg.refine.steps >= 0, "refine_steps must be >= 0");
}

std::string serialize(const RunConfig& cfg) {
  std::string out = "# resolved run configuration\n";
  for (const auto& [name, h] : table()) out += name + " = " + h.get(cfg) + "\n";
  return out;
}

}  // namespace lsac::config
