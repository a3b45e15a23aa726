#include "lsac/trainer.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lsac/checkpoint.hpp"

namespace lsac::trainer {

namespace {

// Fixed-purpose RNG substreams derived from the run seed; the numbering is
// part of the determinism contract.
enum Stream : std::uint64_t {
  kEnvStream = 1,
  kPolicyInit = 2,
  kEnsembleBase = 3,
  kRollout = 4,
  kBatches = 5,
  kChainPick = 6,
  kPolicyNoise = 7,
  kDenoiser = 8,
  kRefill = 9,
  kQBias = 10,
  kEvalBase = 11,
};

std::string fmt(double d) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), d);
  return std::string(buf, res.ptr);
}

Matrix randn(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

}  // namespace

EvalResult evaluate(const policy::PolicyNet& policy, envs::Env& env, int episodes,
                    std::uint64_t seed_base) {
  if (episodes < 1) throw BoundsError("evaluate: episodes must be >= 1");
  Vector returns(episodes);
  for (int e = 0; e < episodes; ++e) {
    Vector obs = env.reset(seed_base + static_cast<std::uint64_t>(e));
    double ret = 0.0;
    while (true) {
      const Matrix a = policy.act_deterministic(obs);
      const auto sr = env.step(a.col(0));
      ret += sr.reward;
      if (sr.done) break;
      obs = sr.obs;
    }
    returns[e] = ret;
  }
  EvalResult out;
  out.mean = returns.mean();
  if (episodes > 1) {
    const double var =
        (returns.array() - out.mean).square().sum() / static_cast<double>(episodes - 1);
    out.ci90 = 1.645 * std::sqrt(var) / std::sqrt(static_cast<double>(episodes));
  }
  return out;
}

DensityMap density_map(const policy::PolicyNet& policy, envs::PointMaze& env,
                       int episodes, std::uint64_t seed_base, bool stochastic) {
  const auto& layout = env.layout();
  DensityMap map;
  map.counts = Eigen::MatrixXi::Zero(layout.rows(), layout.cols());

  Index free_cells = 0;
  for (int r = 0; r < layout.rows(); ++r)
    for (int c = 0; c < layout.cols(); ++c)
      if (!layout.is_wall(r, c)) ++free_cells;

  std::mt19937_64 rng(split_seed(seed_base, 777));
  auto visit = [&](double x, double y) {
    const int r = static_cast<int>(std::floor(y));
    const int c = static_cast<int>(std::floor(x));
    if (r >= 0 && r < layout.rows() && c >= 0 && c < layout.cols() &&
        !layout.is_wall(r, c) && map.counts(r, c) < 100)
      ++map.counts(r, c);
    for (int g = 0; g < 2; ++g) {
      const auto& goal = layout.goals()[static_cast<std::size_t>(g)];
      if (std::hypot(x - (goal[1] + 0.5), y - (goal[0] + 0.5)) <= 0.5)
        map.goal_touched[static_cast<std::size_t>(g)] = true;
    }
  };

  for (int e = 0; e < episodes; ++e) {
    Vector obs = env.reset(seed_base + static_cast<std::uint64_t>(e));
    visit(obs[0], obs[1]);
    while (true) {
      const Matrix a = stochastic ? policy.sample(obs, rng).a
                                  : policy.act_deterministic(obs);
      const auto sr = env.step(a.col(0));
      visit(sr.obs[0], sr.obs[1]);
      if (sr.done) break;
      obs = sr.obs;
    }
  }

  Index visited = 0;
  for (int r = 0; r < layout.rows(); ++r)
    for (int c = 0; c < layout.cols(); ++c)
      if (map.counts(r, c) > 0) ++visited;
  map.coverage_pct =
      free_cells > 0 ? 100.0 * static_cast<double>(visited) / static_cast<double>(free_cells)
                     : 0.0;
  return map;
}

void write_density_csv(const std::filesystem::path& path, const DensityMap& map) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw ParseError("cannot open for writing: " + path.string());
  for (Index r = 0; r < map.counts.rows(); ++r) {
    for (Index c = 0; c < map.counts.cols(); ++c) {
      if (c) os << ',';
      os << map.counts(r, c);
    }
    os << '\n';
  }
}

void write_density_pgm(const std::filesystem::path& path, const DensityMap& map) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("cannot open for writing: " + path.string());
  os << "P5\n" << map.counts.cols() << ' ' << map.counts.rows() << "\n255\n";
  for (Index r = 0; r < map.counts.rows(); ++r)
    for (Index c = 0; c < map.counts.cols(); ++c) {
      const int v = map.counts(r, c);
      const unsigned char byte =
          static_cast<unsigned char>(std::lround(std::min(v, 100) * 255.0 / 100.0));
      os.write(reinterpret_cast<const char*>(&byte), 1);
    }
}

double q_bias(const buffers::RingBuffer& replay, const policy::PolicyNet& policy,
              const QFn& q_fn, envs::Env& env, int episodes, double gamma,
              double alpha, std::mt19937_64& rng) {
  if (replay.size() == 0) throw ContractError("q_bias: empty replay buffer");
  std::uniform_int_distribution<Index> pick(0, replay.size() - 1);
  double sum_diff = 0.0, sum_abs_g = 0.0;
  for (int e = 0; e < episodes; ++e) {
    const Vector start = replay.get(pick(rng)).s;
    env.set_state_from_obs(start);
    const auto first = policy.sample(start, rng);
    const double q = q_fn(start, first.a.col(0));

    auto sr = env.step(first.a.col(0));
    double g = sr.reward;
    double disc = gamma;
    while (!sr.done) {
      const auto act = policy.sample(sr.obs, rng);
      sr = env.step(act.a.col(0));
      g += disc * (sr.reward - alpha * act.logp[0]);
      disc *= gamma;
    }
    sum_diff += q - g;
    sum_abs_g += std::abs(g);
  }
  return sum_diff / std::max(sum_abs_g, 1e-12);
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

struct MetricsWriter {
  std::ofstream os;

  explicit MetricsWriter(const std::filesystem::path& path) : os(path) {
    if (!os) throw ParseError("cannot open for writing: " + path.string());
    os << "step,episodic_return_mean,episodic_return_ci90,critic_loss_mean,alpha,"
          "sigma_mean,q_bias,coverage_pct,wall_seconds\n";
  }

  void row(std::int64_t step, const EvalResult& ev, double loss, double alpha,
           double sigma, double bias, double coverage, double wall) {
    os << step << ',' << fmt(ev.mean) << ',' << fmt(ev.ci90) << ',' << fmt(loss) << ','
       << fmt(alpha) << ',' << fmt(sigma) << ',' << fmt(bias) << ',' << fmt(coverage)
       << ',' << fmt(wall) << '\n';
    os.flush();
  }
};

class CoverageTracker {
 public:
  explicit CoverageTracker(const envs::MazeLayout* layout) : layout_(layout) {
    if (!layout_) return;
    visited_ = Eigen::MatrixXi::Zero(layout_->rows(), layout_->cols());
    for (int r = 0; r < layout_->rows(); ++r)
      for (int c = 0; c < layout_->cols(); ++c)
        if (!layout_->is_wall(r, c)) ++free_;
  }

  void visit(const Vector& obs) {
    if (!layout_) return;
    const int r = static_cast<int>(std::floor(obs[1]));
    const int c = static_cast<int>(std::floor(obs[0]));
    if (r >= 0 && r < layout_->rows() && c >= 0 && c < layout_->cols() &&
        !layout_->is_wall(r, c))
      visited_(r, c) = 1;
  }

  double coverage_pct() const {
    if (!layout_ || free_ == 0) return 0.0;
    return 100.0 * static_cast<double>(visited_.sum()) / static_cast<double>(free_);
  }

 private:
  const envs::MazeLayout* layout_;
  Eigen::MatrixXi visited_;
  Index free_ = 0;
};

void save_agent(const std::filesystem::path& dir, const config::RunConfig& cfg,
                std::uint64_t seed, std::int64_t step, double alpha,
                const policy::PolicyNet& pol, const policy::PolicyNet& pol_target,
                const tempering::CriticEnsemble& ens,
                const diffusion::Denoiser* denoiser,
                const std::optional<buffers::NormStats>& stats) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  ckpt::save_net(dir / "policy.ckpt", pol.net(), seed);
  ckpt::save_net(dir / "policy_target.ckpt", pol_target.net(), seed);
  char name[32];
  for (Index i = 0; i < ens.n(); ++i) {
    std::snprintf(name, sizeof(name), "chain_%02d.ckpt", static_cast<int>(i));
    ckpt::ChainCheckpoint cc;
    cc.params = ens.critics[i].net().params();
    cc.m = ens.chains[i].m;
    cc.v = ens.chains[i].v;
    cc.step = ens.chains[i].step;
    cc.rng_state = ckpt::rng_to_string(ens.chains[i].rng);
    ckpt::save_chain(dir / name, ens.critics[i].net(), cc, seed);
    std::snprintf(name, sizeof(name), "target_%02d.ckpt", static_cast<int>(i));
    ckpt::save_net(dir / name, ens.targets[i].net(), seed);
  }
  if (denoiser) ckpt::save_net(dir / "denoiser.ckpt", denoiser->net(), seed);

  nlohmann::json meta = {{"format", "lsac-agent"},
                         {"version", 1},
                         {"seed", seed},
                         {"step", step},
                         {"alpha", alpha},
                         {"env", cfg.env},
                         {"obs_dim", pol.obs_dim()},
                         {"act_dim", pol.act_dim()},
                         {"n_critics", ens.n()},
                         {"denoiser_trained", denoiser != nullptr}};
  if (stats) {
    meta["norm_mean"] = std::vector<double>(stats->mean.data(),
                                            stats->mean.data() + stats->mean.size());
    meta["norm_std"] =
        std::vector<double>(stats->std.data(), stats->std.data() + stats->std.size());
  }
  std::ofstream os(dir / "meta.json");
  os << meta.dump(2) << '\n';
}

}  // namespace

TrainResult train(const config::RunConfig& cfg, std::uint64_t seed,
                  const std::filesystem::path& run_dir) {
  namespace fs = std::filesystem;
  config::validate(cfg);
  fs::create_directories(run_dir);
  {
    std::ofstream os(run_dir / "resolved.cfg");
    os << config::serialize(cfg);
    std::ofstream ss(run_dir / "seed.txt");
    ss << seed << '\n';
  }

  const std::optional<fs::path> maze_file =
      cfg.maze_file.empty() ? std::nullopt : std::optional<fs::path>(cfg.maze_file);
  auto env = envs::make_env(cfg.env, split_seed(seed, kEnvStream), maze_file);
  auto eval_env = envs::make_env(cfg.env, split_seed(seed, kEvalBase), maze_file);
  auto qbias_env = envs::make_env(cfg.env, split_seed(seed, kQBias), maze_file);
  const Index obs_dim = env->spec().obs_dim;
  const Index act_dim = env->spec().act_dim;

  policy::PolicyNet pol(obs_dim, act_dim, cfg.policy_hidden);
  {
    std::mt19937_64 rng(split_seed(seed, kPolicyInit));
    pol.init(rng);
  }
  policy::PolicyNet pol_target = pol;
  nn::AdamState pol_adam(pol.net().param_count());
  nn::AdamConfig pol_adam_cfg;
  pol_adam_cfg.lr = cfg.policy_lr;

  policy::EntropyCoef coef;
  coef.alpha = cfg.alpha_init;
  coef.lr = cfg.alpha_lr;
  coef.target_entropy = std::isnan(cfg.target_entropy)
                            ? -static_cast<double>(act_dim)
                            : cfg.target_entropy;

  auto ensemble = tempering::init_ensemble(cfg.n_critics, split_seed(seed, kEnsembleBase),
                                           obs_dim, act_dim, cfg.critic_hidden,
                                           cfg.eps_sigma, cfg.clip_tau, cfg.kappa_b);
  const tempering::Sampler sampler =
      cfg.sampler == "adam" ? tempering::Sampler::kAdam : tempering::Sampler::kAsgld;

  buffers::RingBuffer replay(cfg.replay_capacity, obs_dim, act_dim);
  buffers::RingBuffer synth(cfg.diffusion_capacity, obs_dim, act_dim);

  const Index tuple_dim = replay.tuple_dim();
  diffusion::Denoiser denoiser(tuple_dim, cfg.denoiser_hidden, cfg.denoiser_emb);
  const auto schedule = diffusion::make_schedule(cfg.diffusion_T, cfg.beta_min, cfg.beta_max);
  std::mt19937_64 denoiser_rng(split_seed(seed, kDenoiser));
  denoiser.init(denoiser_rng);
  std::optional<buffers::NormStats> stats;
  bool diffusion_ready = false;

  std::mt19937_64 rollout_rng(split_seed(seed, kRollout));
  std::mt19937_64 batch_rng(split_seed(seed, kBatches));
  std::mt19937_64 pick_rng(split_seed(seed, kChainPick));
  std::mt19937_64 policy_noise_rng(split_seed(seed, kPolicyNoise));
  std::mt19937_64 refill_rng(split_seed(seed, kRefill));
  std::mt19937_64 qbias_rng(split_seed(seed, kQBias) ^ 0x5bd1e995u);

  const auto* maze = dynamic_cast<envs::PointMaze*>(env.get());
  CoverageTracker coverage(maze ? &maze->layout() : nullptr);

  MetricsWriter metrics(run_dir / "metrics.csv");
  const auto t0 = std::chrono::steady_clock::now();

  TrainResult result;
  result.run_dir = run_dir;

  double last_loss = 0.0, last_sigma = 0.0;
  std::int64_t last_retrain = 0;
  std::int64_t next_eval = cfg.eval_period;
  std::uniform_real_distribution<double> uniform_act(-1.0, 1.0);

  Vector obs = env->reset();
  coverage.visit(obs);

  auto ensemble_q = [&](const Vector& s, const Vector& a) {
    double q = 0.0;
    for (const auto& critic : ensemble.critics)
      q += critic.value_dist(s, a).q[0];
    return q / static_cast<double>(ensemble.n());
  };

  auto write_metrics_row = [&](std::int64_t step) {
    const auto ev = evaluate(pol, *eval_env, cfg.eval_episodes,
                             split_seed(seed, kEvalBase) + static_cast<std::uint64_t>(step));
    double bias = 0.0;
    if (replay.size() > 0)
      bias = q_bias(replay, pol, ensemble_q, *qbias_env, cfg.qbias_episodes, cfg.gamma,
                    coef.alpha, qbias_rng);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    metrics.row(step, ev, last_loss, coef.alpha, last_sigma, bias,
                coverage.coverage_pct(), wall);
    result.final_eval_mean = ev.mean;
    result.final_eval_ci90 = ev.ci90;
    result.final_coverage_pct = coverage.coverage_pct();
  };

  while (result.env_steps < cfg.total_steps) {
    // (i) interaction
    for (std::int64_t s = 0;
         s < cfg.steps_per_iteration && result.env_steps < cfg.total_steps; ++s) {
      Vector action(act_dim);
      if (result.env_steps < cfg.warmup_random_steps) {
        for (Index d = 0; d < act_dim; ++d) action[d] = uniform_act(rollout_rng);
      } else {
        action = pol.sample(obs, rollout_rng).a.col(0);
      }
      const auto sr = env->step(action);
      buffers::Transition t;
      t.s = obs;
      t.a = action;
      t.r = sr.reward;
      t.s_next = sr.obs;
      t.done = (sr.done && !sr.truncated) ? 1.0 : 0.0;
      replay.push(t);
      coverage.visit(sr.obs);
      ++result.env_steps;
      if (sr.done) {
        obs = env->reset();
        coverage.visit(obs);
      } else {
        obs = sr.obs;
      }
    }

    // (ii)+(iii) updates
    if (result.env_steps > cfg.warmup_random_steps && replay.size() >= 2) {
      for (std::int64_t u = 0; u < cfg.updates_per_iteration; ++u) {
        const double ratio =
            (diffusion_ready && !cfg.no_diffusion && synth.size() > 0) ? cfg.mix_ratio
                                                                       : 0.0;
        std::vector<buffers::Batch> batches;
        batches.reserve(ensemble.n());
        for (Index i = 0; i < ensemble.n(); ++i) {
          buffers::Batch b = buffers::mixed_batch(replay, synth, cfg.batch, ratio, batch_rng);
          const Index n_synth = b.size() - b.replay_count;
          if (n_synth > 0 && result.first_mixed_update_step < 0)
            result.first_mixed_update_step = result.env_steps;
          if (n_synth > 0 && !cfg.no_refine && cfg.refine.steps > 0 &&
              cfg.refine.beta_a > 0.0) {
            const Matrix refined = diffusion::refine_actions(
                b.s.rightCols(n_synth), b.a.rightCols(n_synth), ensemble.critics[i],
                cfg.refine);
            b.a.rightCols(n_synth) = refined;
            synth.overwrite_actions(b.diffusion_indices, refined);
          }
          batches.push_back(std::move(b));
        }
        const auto reports =
            tempering::update_ensemble(ensemble, batches, pol_target, coef.alpha,
                                       cfg.gamma, cfg.sgld, sampler, cfg.standard_critic);
        result.critic_updates += ensemble.n();
        last_loss = 0.0;
        last_sigma = 0.0;
        for (const auto& r : reports) {
          last_loss += r.loss / static_cast<double>(reports.size());
          last_sigma += r.sigma_mean / static_cast<double>(reports.size());
        }

        const Index picked = tempering::pick_chain(ensemble, pick_rng);
        const buffers::Batch& sel = batches[picked];
        const Matrix eps = randn(act_dim, sel.size(), policy_noise_rng);
        const auto sample = pol.sample_with_noise(sel.s, eps);
        policy::update_alpha(coef, sample.logp);
        auto pg = policy::policy_gradient(pol, ensemble.critics[picked], sel.s,
                                          coef.alpha, eps);
        pg.grad = asgld::clip_to_global_norm(pg.grad, cfg.policy_clip);
        Vector params = pol.net().params();
        nn::adam_step(params, pg.grad, pol_adam, pol_adam_cfg);
        pol.net().set_params(params);
        ++result.policy_updates;
      }
    }

    // (iv) diffusion retrain + refill every F env steps
    if (!cfg.no_diffusion && result.env_steps - last_retrain >= cfg.diffusion_period &&
        replay.size() >= 2) {
      last_retrain = result.env_steps;
      if (result.first_retrain_step < 0) result.first_retrain_step = result.env_steps;
      stats = buffers::fit_norm_stats(replay);
      const Matrix norm = buffers::normalize_tuples(replay.tuples(), *stats);
      diffusion::train_denoiser(denoiser, schedule, norm, cfg.denoiser_train_steps,
                                cfg.denoiser_batch, cfg.denoiser_lr, denoiser_rng);
      ++result.denoiser_trainings;
      synth.clear();
      Index remaining = std::min<Index>(cfg.refill_count, synth.capacity());
      while (remaining > 0) {
        const Index chunk = std::min<Index>(remaining, 50000);
        const Matrix tuples = diffusion::sample_transitions(
            denoiser, schedule, chunk, *stats, obs_dim, act_dim, refill_rng);
        for (Index j = 0; j < tuples.cols(); ++j) synth.push_tuple(tuples.col(j));
        remaining -= chunk;
      }
      ++result.refills;
      diffusion_ready = true;
    }

    // (v) Polyak targets
    if (result.env_steps > cfg.warmup_random_steps && result.policy_updates > 0) {
      for (Index i = 0; i < ensemble.n(); ++i)
        nn::polyak_update(ensemble.targets[i].net(), ensemble.critics[i].net(), cfg.tau);
      nn::polyak_update(pol_target.net(), pol.net(), cfg.tau);
    }

    if (result.env_steps >= next_eval || result.env_steps >= cfg.total_steps) {
      write_metrics_row(result.env_steps);
      while (next_eval <= result.env_steps) next_eval += cfg.eval_period;
    }
  }

  save_agent(run_dir / "checkpoint", cfg, seed, result.env_steps, coef.alpha, pol,
             pol_target, ensemble, diffusion_ready ? &denoiser : nullptr, stats);
  if (cfg.dump_buffers) {
    buffers::dump(run_dir / "replay.dump", replay, false);
    if (synth.size() > 0) buffers::dump(run_dir / "diffusion.dump", synth, true);
  }
  return result;
}

QFn LoadedAgent::ensemble_q() const {
  const auto* critics = &ensemble.critics;
  return [critics](const Vector& s, const Vector& a) {
    double q = 0.0;
    for (const auto& critic : *critics) q += critic.value_dist(s, a).q[0];
    return q / static_cast<double>(critics->size());
  };
}

LoadedAgent load_agent(const std::filesystem::path& run_dir) {
  namespace fs = std::filesystem;
  const fs::path ckpt_dir = run_dir / "checkpoint";
  if (!fs::exists(ckpt_dir / "meta.json"))
    throw ParseError("load_agent: no checkpoint at " + ckpt_dir.string());

  LoadedAgent agent;
  agent.cfg = config::parse_config_file(run_dir / "resolved.cfg");

  nlohmann::json meta;
  {
    std::ifstream is(ckpt_dir / "meta.json");
    is >> meta;
  }
  agent.seed = meta.at("seed").get<std::uint64_t>();
  agent.step = meta.at("step").get<std::int64_t>();
  agent.alpha = meta.at("alpha").get<double>();
  agent.obs_dim = meta.at("obs_dim").get<Index>();
  agent.act_dim = meta.at("act_dim").get<Index>();

  agent.policy = std::make_unique<policy::PolicyNet>(agent.obs_dim, agent.act_dim,
                                                     agent.cfg.policy_hidden);
  ckpt::load_net(ckpt_dir / "policy.ckpt", agent.policy->net());

  const Index n = meta.at("n_critics").get<Index>();
  agent.ensemble = tempering::init_ensemble(n, agent.seed, agent.obs_dim, agent.act_dim,
                                            agent.cfg.critic_hidden, agent.cfg.eps_sigma,
                                            agent.cfg.clip_tau, agent.cfg.kappa_b);
  char name[32];
  for (Index i = 0; i < n; ++i) {
    std::snprintf(name, sizeof(name), "chain_%02d.ckpt", static_cast<int>(i));
    const auto cc = ckpt::load_chain(ckpt_dir / name, agent.ensemble.critics[i].net());
    agent.ensemble.chains[i].m = cc.m;
    agent.ensemble.chains[i].v = cc.v;
    agent.ensemble.chains[i].step = cc.step;
    agent.ensemble.chains[i].rng = ckpt::rng_from_string(cc.rng_state);
    std::snprintf(name, sizeof(name), "target_%02d.ckpt", static_cast<int>(i));
    ckpt::load_net(ckpt_dir / name, agent.ensemble.targets[i].net());
  }

  agent.schedule = diffusion::make_schedule(agent.cfg.diffusion_T, agent.cfg.beta_min,
                                            agent.cfg.beta_max);
  if (meta.value("denoiser_trained", false)) {
    const Index tuple_dim = 2 * agent.obs_dim + agent.act_dim + 2;
    agent.denoiser = std::make_unique<diffusion::Denoiser>(
        tuple_dim, agent.cfg.denoiser_hidden, agent.cfg.denoiser_emb);
    ckpt::load_net(ckpt_dir / "denoiser.ckpt", agent.denoiser->net());
  }
  if (meta.contains("norm_mean")) {
    buffers::NormStats st;
    const auto mean = meta.at("norm_mean").get<std::vector<double>>();
    const auto std_ = meta.at("norm_std").get<std::vector<double>>();
    st.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Index>(mean.size()));
    st.std = Eigen::Map<const Vector>(std_.data(), static_cast<Index>(std_.size()));
    agent.stats = st;
  }
  return agent;
}

}  // namespace lsac::trainer
