#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>

#include "lsac/buffers.hpp"
#include "lsac/config.hpp"
#include "lsac/diffusion.hpp"
#include "lsac/envs.hpp"
#include "lsac/policy.hpp"
#include "lsac/tempering.hpp"

namespace lsac::trainer {

struct EvalResult {
  double mean = 0.0;
  double ci90 = 0.0;  // 1.645 * s / sqrt(n); 0 for a single episode
};

/// Deterministic-mode rollouts on fresh episodes seeded seed_base + e.
EvalResult evaluate(const policy::PolicyNet& policy, envs::Env& env, int episodes,
                    std::uint64_t seed_base);

/// Visit-count grid over rollout episodes, capped at 100 per cell; the reset
/// position counts as a visit. Coverage is the visited share of free cells.
struct DensityMap {
  Eigen::MatrixXi counts;
  double coverage_pct = 0.0;
  std::array<bool, 2> goal_touched = {false, false};  // trajectory entered goal radius
};

DensityMap density_map(const policy::PolicyNet& policy, envs::PointMaze& env,
                       int episodes, std::uint64_t seed_base, bool stochastic);

void write_density_csv(const std::filesystem::path& path, const DensityMap& map);
void write_density_pgm(const std::filesystem::path& path, const DensityMap& map);

/// Normalized Q overestimation: start states drawn from replay, on-policy
/// Monte-Carlo soft returns, bias = mean(Q(s,a) - G) / mean(|G|).
/// The Q estimate is injectable so a closed-form oracle can stand in.
using QFn = std::function<double(const Vector& s, const Vector& a)>;
double q_bias(const buffers::RingBuffer& replay, const policy::PolicyNet& policy,
              const QFn& q_fn, envs::Env& env, int episodes, double gamma,
              double alpha, std::mt19937_64& rng);

struct TrainResult {
  std::int64_t env_steps = 0;
  std::int64_t critic_updates = 0;
  std::int64_t policy_updates = 0;
  std::int64_t denoiser_trainings = 0;
  std::int64_t refills = 0;
  std::int64_t first_retrain_step = -1;       // env step of the first denoiser training
  std::int64_t first_mixed_update_step = -1;  // env step of the first synthetic-mixed update
  double final_eval_mean = 0.0;
  double final_eval_ci90 = 0.0;
  double final_coverage_pct = 0.0;
  std::filesystem::path run_dir;
};

/// One seed's Alg.-1 training loop; writes metrics.csv, resolved.cfg, final
/// checkpoints and (optionally) buffer dumps into run_dir.
TrainResult train(const config::RunConfig& cfg, std::uint64_t seed,
                  const std::filesystem::path& run_dir);

/// Reconstructs the saved agent of a run directory for the analysis commands.
struct LoadedAgent {
  config::RunConfig cfg;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  double alpha = 0.2;
  Index obs_dim = 0, act_dim = 0;
  std::unique_ptr<policy::PolicyNet> policy;
  tempering::CriticEnsemble ensemble;
  std::unique_ptr<diffusion::Denoiser> denoiser;  // null if never trained
  std::optional<buffers::NormStats> stats;
  diffusion::NoiseSchedule schedule;

  /// Ensemble-mean Q functor over the loaded chains.
  QFn ensemble_q() const;
};

LoadedAgent load_agent(const std::filesystem::path& run_dir);

}  // namespace lsac::trainer
