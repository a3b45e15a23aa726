// lsac: train and analyze Langevin soft actor-critic agents.
//
// Subcommands: train, eval, density, qbias, synthcheck. Configuration comes
// from key = value files plus mirrored command-line flags; flags win. The
// LSAC_OUT environment variable overrides the configured output directory.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lsac/buffers.hpp"
#include "lsac/config.hpp"
#include "lsac/envs.hpp"
#include "lsac/trainer.hpp"

namespace fs = std::filesystem;
using lsac::Index;
using lsac::Matrix;
using lsac::Vector;

namespace {

struct ConfigCli {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "key = value config file");
    for (const auto& key : lsac::config::config_keys())
      options[key] = app->add_option("--" + key, values[key]);
  }

  lsac::config::RunConfig resolve() const {
    lsac::config::RunConfig cfg;
    if (!config_file.empty()) cfg = lsac::config::parse_config_file(config_file);
    if (const char* out = std::getenv("LSAC_OUT"); out && *out) cfg.out_dir = out;
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) lsac::config::apply_kv(cfg, key, values.at(key));
    lsac::config::validate(cfg);
    return cfg;
  }
};

fs::path seed_dir(const lsac::config::RunConfig& cfg, std::uint64_t seed) {
  return fs::path(cfg.out_dir) / ("seed_" + std::to_string(seed));
}

int run_train(const lsac::config::RunConfig& cfg, const std::string& self_exe) {
  if (cfg.parallel_runs > 1 && cfg.seeds.size() > 1) {
    // Shard the seed list across child processes, one group per process.
    fs::create_directories(cfg.out_dir);
    const fs::path sweep_cfg = fs::path(cfg.out_dir) / "sweep.cfg";
    {
      std::ofstream os(sweep_cfg);
      os << lsac::config::serialize(cfg);
    }
    const std::size_t groups =
        std::min<std::size_t>(static_cast<std::size_t>(cfg.parallel_runs), cfg.seeds.size());
    std::vector<std::string> cmds(groups);
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
      auto& cmd = cmds[i % groups];
      if (!cmd.empty()) cmd += ",";
      cmd += std::to_string(cfg.seeds[i]);
    }
    std::vector<std::future<int>> children;
    for (const auto& seeds : cmds) {
      std::string cmd = self_exe + " train --config " + sweep_cfg.string() +
                        " --seeds " + seeds + " --parallel_runs 1";
      children.push_back(std::async(std::launch::async,
                                    [cmd] { return std::system(cmd.c_str()); }));
    }
    int status = 0;
    for (auto& c : children) status |= c.get();
    return status == 0 ? 0 : 1;
  }

  for (const std::uint64_t seed : cfg.seeds) {
    const auto result = lsac::trainer::train(cfg, seed, seed_dir(cfg, seed));
    std::cout << "seed " << seed << ": steps " << result.env_steps << ", final eval "
              << result.final_eval_mean << " +/- " << result.final_eval_ci90 << '\n';
  }
  return 0;
}

lsac::trainer::LoadedAgent load(const std::string& run_dir) {
  return lsac::trainer::load_agent(run_dir);
}

std::unique_ptr<lsac::envs::Env> agent_env(const lsac::trainer::LoadedAgent& agent,
                                           std::uint64_t seed) {
  const std::optional<fs::path> maze_file =
      agent.cfg.maze_file.empty() ? std::nullopt
                                  : std::optional<fs::path>(agent.cfg.maze_file);
  return lsac::envs::make_env(agent.cfg.env, seed, maze_file);
}

int run_eval(const std::string& run_dir, int episodes, std::uint64_t seed) {
  const auto agent = load(run_dir);
  auto env = agent_env(agent, seed);
  const auto ev = lsac::trainer::evaluate(*agent.policy, *env, episodes, seed);
  nlohmann::json report = {{"episodes", episodes},
                           {"seed", seed},
                           {"return_mean", ev.mean},
                           {"return_ci90", ev.ci90}};
  std::ofstream os(fs::path(run_dir) / "eval.json");
  os << report.dump(2) << '\n';
  std::cout << "eval: mean " << ev.mean << " ci90 " << ev.ci90 << " over " << episodes
            << " episodes\n";
  return 0;
}

int run_density(const std::string& run_dir, int episodes, std::uint64_t seed,
                bool deterministic) {
  const auto agent = load(run_dir);
  if (agent.cfg.env != "maze")
    throw lsac::ContractError("density requires a maze run (got env '" +
                              agent.cfg.env + "')");
  auto env = agent_env(agent, seed);
  auto* maze = dynamic_cast<lsac::envs::PointMaze*>(env.get());
  const auto map =
      lsac::trainer::density_map(*agent.policy, *maze, episodes, seed, !deterministic);
  lsac::trainer::write_density_csv(fs::path(run_dir) / "density.csv", map);
  lsac::trainer::write_density_pgm(fs::path(run_dir) / "density.pgm", map);
  nlohmann::json report = {{"episodes", episodes},
                           {"coverage_pct", map.coverage_pct},
                           {"goal0_touched", map.goal_touched[0]},
                           {"goal1_touched", map.goal_touched[1]}};
  std::ofstream os(fs::path(run_dir) / "density.json");
  os << report.dump(2) << '\n';
  std::cout << "density: coverage " << map.coverage_pct << "% goals "
            << map.goal_touched[0] << '/' << map.goal_touched[1] << '\n';
  return 0;
}

int run_qbias(const std::string& run_dir, int episodes, std::uint64_t seed) {
  const auto agent = load(run_dir);
  lsac::buffers::RingBuffer replay(agent.cfg.replay_capacity, agent.obs_dim,
                                   agent.act_dim);
  lsac::buffers::load_dump(fs::path(run_dir) / "replay.dump", replay);
  auto env = agent_env(agent, seed);
  std::mt19937_64 rng(seed);
  const double bias =
      lsac::trainer::q_bias(replay, *agent.policy, agent.ensemble_q(), *env, episodes,
                            agent.cfg.gamma, agent.alpha, rng);
  nlohmann::json report = {{"episodes", episodes}, {"q_bias", bias}};
  std::ofstream os(fs::path(run_dir) / "qbias.json");
  os << report.dump(2) << '\n';
  std::cout << "qbias: " << bias << " over " << episodes << " episodes\n";
  return 0;
}

nlohmann::json dim_stats(const Matrix& tuples) {
  nlohmann::json out = nlohmann::json::array();
  for (Index i = 0; i < tuples.rows(); ++i) {
    const double mean = tuples.row(i).mean();
    const double sd = std::sqrt((tuples.row(i).array() - mean).square().mean());
    out.push_back({{"mean", mean}, {"std", sd}});
  }
  return out;
}

int run_synthcheck(const std::string& run_dir, std::uint64_t seed) {
  const auto agent = load(run_dir);
  lsac::buffers::RingBuffer replay(agent.cfg.replay_capacity, agent.obs_dim,
                                   agent.act_dim);
  lsac::buffers::load_dump(fs::path(run_dir) / "replay.dump", replay);
  lsac::buffers::RingBuffer synth(agent.cfg.diffusion_capacity, agent.obs_dim,
                                  agent.act_dim);
  bool synthetic = false;
  lsac::buffers::load_dump(fs::path(run_dir) / "diffusion.dump", synth, &synthetic);
  if (!synthetic)
    throw lsac::ContractError("synthcheck: diffusion.dump is not marked synthetic");

  std::mt19937_64 rng(seed);
  const auto batch = synth.sample_uniform(256, rng);
  const auto& critic = agent.ensemble.critics.front();
  const double q_before = critic.value_dist(batch.s, batch.a).q.mean();
  const Matrix refined =
      lsac::diffusion::refine_actions(batch.s, batch.a, critic, agent.cfg.refine);
  const double q_after = critic.value_dist(batch.s, refined).q.mean();

  nlohmann::json report = {{"replay_count", replay.size()},
                           {"synthetic_count", synth.size()},
                           {"replay_dims", dim_stats(replay.tuples())},
                           {"synthetic_dims", dim_stats(synth.tuples())},
                           {"refine_q_before", q_before},
                           {"refine_q_after", q_after},
                           {"refine_q_gain", q_after - q_before}};
  std::ofstream os(fs::path(run_dir) / "synthcheck.json");
  os << report.dump(2) << '\n';
  std::cout << "synthcheck: " << synth.size() << " synthetic rows, refine gain "
            << q_after - q_before << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Langevin soft actor-critic with diffusion-synthesized replay"};
  app.require_subcommand(1);

  ConfigCli train_cfg;
  auto* train_cmd = app.add_subcommand("train", "train one or more seeds");
  train_cfg.attach(train_cmd);

  std::string run_dir;
  int episodes = 10;
  std::uint64_t seed = 0;
  bool deterministic = false;

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a saved policy");
  eval_cmd->add_option("--run", run_dir, "run directory")->required();
  eval_cmd->add_option("--episodes", episodes);
  eval_cmd->add_option("--seed", seed);

  auto* density_cmd = app.add_subcommand("density", "maze visit-density map");
  density_cmd->add_option("--run", run_dir, "run directory")->required();
  density_cmd->add_option("--episodes", episodes)->default_val(200);
  density_cmd->add_option("--seed", seed);
  density_cmd->add_flag("--deterministic", deterministic,
                        "greedy actions instead of sampled");

  auto* qbias_cmd = app.add_subcommand("qbias", "Monte-Carlo Q-bias estimate");
  qbias_cmd->add_option("--run", run_dir, "run directory")->required();
  qbias_cmd->add_option("--episodes", episodes)->default_val(100);
  qbias_cmd->add_option("--seed", seed);

  auto* synth_cmd = app.add_subcommand("synthcheck", "synthetic-buffer fidelity report");
  synth_cmd->add_option("--run", run_dir, "run directory")->required();
  synth_cmd->add_option("--seed", seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return run_train(train_cfg.resolve(), argv[0]);
    if (eval_cmd->parsed()) return run_eval(run_dir, episodes, seed);
    if (density_cmd->parsed()) return run_density(run_dir, episodes, seed, deterministic);
    if (qbias_cmd->parsed()) return run_qbias(run_dir, episodes, seed);
    if (synth_cmd->parsed()) return run_synthcheck(run_dir, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
