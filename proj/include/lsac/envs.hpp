#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lsac/common.hpp"

namespace lsac::envs {

struct EnvSpec {
  Index obs_dim = 0;
  Index act_dim = 0;
  Vector act_low;
  Vector act_high;
  int max_episode_steps = 0;
};

/// done is the combined episode-over flag (termination OR truncation);
/// truncated distinguishes time-limit endings so the trainer can strip them
/// from bootstrap masking.
struct StepResult {
  Vector obs;
  double reward = 0.0;
  bool done = false;
  bool truncated = false;
};

/// Rectangular wall grid with one start cell and exactly two goal cells.
/// Construction validates that both goals are flood-fill reachable.
class MazeLayout {
 public:
  /// Parses lines of '#' (wall), '.' (free), 'S' (start), 'G' (goal).
  static MazeLayout parse(const std::vector<std::string>& lines);
  static MazeLayout load(const std::filesystem::path& path);
  static MazeLayout default_layout();

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool is_wall(int r, int c) const {
    if (r < 0 || r >= rows_ || c < 0 || c >= cols_) return true;
    return wall_[static_cast<std::size_t>(r) * cols_ + c];
  }
  std::array<int, 2> start() const { return start_; }
  const std::array<std::array<int, 2>, 2>& goals() const { return goals_; }

 private:
  int rows_ = 0, cols_ = 0;
  std::vector<bool> wall_;
  std::array<int, 2> start_{};
  std::array<std::array<int, 2>, 2> goals_{};
};

/// Uniform MDP interface. Actions are normalized to [-1,1]^d at this boundary
/// and mapped to the physical bounds internally.
class Env {
 public:
  virtual ~Env() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual Vector reset() = 0;
  virtual Vector reset(std::uint64_t seed) = 0;
  virtual StepResult step(const Vector& action) = 0;
  /// Restores the dynamical state encoded in an observation and begins a
  /// fresh episode there (used by Monte-Carlo return estimation).
  virtual void set_state_from_obs(const Vector& obs) = 0;
  virtual std::string name() const = 0;
};

/// Torque-limited pendulum swing-up. Observation (cos th, sin th, thdot);
/// dense cost on angle, speed and effort; 200-step episodes, never terminal.
class Pendulum final : public Env {
 public:
  explicit Pendulum(std::uint64_t seed);
  const EnvSpec& spec() const override { return spec_; }
  Vector reset() override;
  Vector reset(std::uint64_t seed) override;
  StepResult step(const Vector& action) override;
  void set_state_from_obs(const Vector& obs) override;
  std::string name() const override { return "pendulum"; }

  std::array<double, 2> state() const { return {theta_, theta_dot_}; }
  void set_state(double theta, double theta_dot);

 private:
  EnvSpec spec_;
  std::mt19937_64 rng_;
  double theta_ = 0.0, theta_dot_ = 0.0;
  int steps_ = 0;
  bool done_ = true;

  Vector obs() const;
};

/// Point mass in a gridded maze with velocity damping. The desired goal is
/// drawn uniformly from the two layout goals at reset and never observed.
class PointMaze final : public Env {
 public:
  PointMaze(MazeLayout layout, std::uint64_t seed);
  const EnvSpec& spec() const override { return spec_; }
  Vector reset() override;
  Vector reset(std::uint64_t seed) override;
  StepResult step(const Vector& action) override;
  void set_state_from_obs(const Vector& obs) override;
  std::string name() const override { return "maze"; }

  const MazeLayout& layout() const { return layout_; }
  int goal_index() const { return goal_; }
  std::array<double, 4> state() const { return {x_, y_, vx_, vy_}; }
  /// Places the point mid-episode (goal and step count kept). The position
  /// must be inside a free cell.
  void set_state(double x, double y, double vx, double vy);

 private:
  MazeLayout layout_;
  EnvSpec spec_;
  std::mt19937_64 rng_;
  double x_ = 0.0, y_ = 0.0, vx_ = 0.0, vy_ = 0.0;
  int goal_ = 0;
  int steps_ = 0;
  bool done_ = true;

  Vector obs() const;
  double goal_distance() const;
};

/// Wraps an angle into (-pi, pi].
double wrap_angle(double theta);

/// env_name is "pendulum" or "maze"; maze_file overrides the built-in layout.
std::unique_ptr<Env> make_env(const std::string& env_name, std::uint64_t seed,
                              const std::optional<std::filesystem::path>& maze_file = {});

}  // namespace lsac::envs
