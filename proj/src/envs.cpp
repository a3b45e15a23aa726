#include "lsac/envs.hpp"

#include <cmath>
#include <deque>
#include <fstream>

namespace lsac::envs {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Keeps a clamped coordinate strictly inside the free cell so that floor()
// never lands on the wall it was clamped against.
constexpr double kFaceMargin = 1e-9;

double clamp(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

}  // namespace

double wrap_angle(double theta) {
  double w = std::fmod(theta + kPi, 2.0 * kPi);
  if (w <= 0.0) w += 2.0 * kPi;
  return w - kPi;
}

// ---------------------------------------------------------------------------
// MazeLayout

MazeLayout MazeLayout::parse(const std::vector<std::string>& lines) {
  MazeLayout m;
  if (lines.empty() || lines.front().empty()) throw ParseError("maze: empty layout");
  m.rows_ = static_cast<int>(lines.size());
  m.cols_ = static_cast<int>(lines.front().size());
  m.wall_.assign(static_cast<std::size_t>(m.rows_) * m.cols_, false);
  int starts = 0, goals = 0;
  for (int r = 0; r < m.rows_; ++r) {
    if (static_cast<int>(lines[r].size()) != m.cols_)
      throw ParseError("maze: ragged row " + std::to_string(r));
    for (int c = 0; c < m.cols_; ++c) {
      const char ch = lines[r][c];
      switch (ch) {
        case '#': m.wall_[static_cast<std::size_t>(r) * m.cols_ + c] = true; break;
        case '.': break;
        case 'S':
          ++starts;
          m.start_ = {r, c};
          break;
        case 'G':
          if (goals < 2) m.goals_[goals] = {r, c};
          ++goals;
          break;
        default:
          throw ParseError(std::string("maze: invalid character '") + ch + "' at row " +
                           std::to_string(r) + ", col " + std::to_string(c));
      }
    }
  }
  if (starts != 1) throw ParseError("maze: expected exactly one 'S', got " + std::to_string(starts));
  if (goals != 2) throw ParseError("maze: expected exactly two 'G', got " + std::to_string(goals));

  // Flood fill from start; both goals must be reachable.
  std::vector<bool> seen(m.wall_.size(), false);
  std::deque<std::array<int, 2>> frontier{m.start_};
  seen[static_cast<std::size_t>(m.start_[0]) * m.cols_ + m.start_[1]] = true;
  while (!frontier.empty()) {
    const auto [r, c] = frontier.front();
    frontier.pop_front();
    for (const auto& [dr, dc] : {std::array<int, 2>{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
      const int nr = r + dr, nc = c + dc;
      if (m.is_wall(nr, nc)) continue;
      const std::size_t idx = static_cast<std::size_t>(nr) * m.cols_ + nc;
      if (!seen[idx]) {
        seen[idx] = true;
        frontier.push_back({nr, nc});
      }
    }
  }
  for (const auto& g : m.goals_)
    if (!seen[static_cast<std::size_t>(g[0]) * m.cols_ + g[1]])
      throw ParseError("maze: goal at (" + std::to_string(g[0]) + "," + std::to_string(g[1]) +
                       ") unreachable from start");
  return m;
}

MazeLayout MazeLayout::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("maze: cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return parse(lines);
}

MazeLayout MazeLayout::default_layout() {
  return parse({
      "#######",
      "#..#.G#",
      "#.....#",
      "##.S.##",
      "#.....#",
      "#G.#..#",
      "#######",
  });
}

// ---------------------------------------------------------------------------
// Pendulum

namespace {
constexpr double kGravity = 10.0;
constexpr double kMass = 1.0;
constexpr double kLength = 1.0;
constexpr double kDt = 0.05;
constexpr double kMaxTorque = 2.0;
constexpr double kMaxSpeed = 8.0;
constexpr int kPendulumSteps = 200;
}  // namespace

Pendulum::Pendulum(std::uint64_t seed) : rng_(seed) {
  spec_.obs_dim = 3;
  spec_.act_dim = 1;
  spec_.act_low = Vector::Constant(1, -kMaxTorque);
  spec_.act_high = Vector::Constant(1, kMaxTorque);
  spec_.max_episode_steps = kPendulumSteps;
}

Vector Pendulum::obs() const {
  Vector o(3);
  o << std::cos(theta_), std::sin(theta_), theta_dot_;
  return o;
}

Vector Pendulum::reset() {
  theta_ = std::uniform_real_distribution<double>(-kPi, kPi)(rng_);
  theta_dot_ = std::uniform_real_distribution<double>(-1.0, 1.0)(rng_);
  steps_ = 0;
  done_ = false;
  return obs();
}

Vector Pendulum::reset(std::uint64_t seed) {
  rng_.seed(seed);
  return reset();
}

void Pendulum::set_state(double theta, double theta_dot) {
  theta_ = theta;
  theta_dot_ = clamp(theta_dot, -kMaxSpeed, kMaxSpeed);
  steps_ = 0;
  done_ = false;
}

void Pendulum::set_state_from_obs(const Vector& obs) {
  if (obs.size() != 3) throw ShapeError("pendulum: obs must have 3 entries");
  set_state(std::atan2(obs[1], obs[0]), obs[2]);
}

StepResult Pendulum::step(const Vector& action) {
  if (done_) throw ContractError("pendulum: step after episode end; call reset");
  if (action.size() != 1) throw ShapeError("pendulum: action must have 1 entry");
  const double u = kMaxTorque * clamp(action[0], -1.0, 1.0);

  const double w = wrap_angle(theta_);
  const double reward = -(w * w + 0.1 * theta_dot_ * theta_dot_ + 0.001 * u * u);

  const double acc = 3.0 * kGravity / (2.0 * kLength) * std::sin(theta_) +
                     3.0 / (kMass * kLength * kLength) * u;
  theta_dot_ = clamp(theta_dot_ + acc * kDt, -kMaxSpeed, kMaxSpeed);
  theta_ += theta_dot_ * kDt;
  ++steps_;

  StepResult out;
  out.obs = obs();
  out.reward = reward;
  out.truncated = steps_ >= kPendulumSteps;
  out.done = out.truncated;  // swing-up has no terminal state
  done_ = out.done;
  return out;
}

// ---------------------------------------------------------------------------
// PointMaze

namespace {
constexpr double kDamp = 0.9;
constexpr double kMazeDt = 0.1;
constexpr double kGoalRadius = 0.5;
constexpr int kMazeSteps = 300;
}  // namespace

PointMaze::PointMaze(MazeLayout layout, std::uint64_t seed)
    : layout_(std::move(layout)), rng_(seed) {
  spec_.obs_dim = 4;
  spec_.act_dim = 2;
  spec_.act_low = Vector::Constant(2, -1.0);
  spec_.act_high = Vector::Constant(2, 1.0);
  spec_.max_episode_steps = kMazeSteps;
}

Vector PointMaze::obs() const {
  Vector o(4);
  o << x_, y_, vx_, vy_;
  return o;
}

double PointMaze::goal_distance() const {
  const auto& g = layout_.goals()[goal_];
  const double gx = g[1] + 0.5, gy = g[0] + 0.5;
  return std::hypot(x_ - gx, y_ - gy);
}

Vector PointMaze::reset() {
  const auto s = layout_.start();
  x_ = s[1] + 0.5;
  y_ = s[0] + 0.5;
  vx_ = vy_ = 0.0;
  goal_ = static_cast<int>(std::uniform_int_distribution<int>(0, 1)(rng_));
  steps_ = 0;
  done_ = false;
  return obs();
}

Vector PointMaze::reset(std::uint64_t seed) {
  rng_.seed(seed);
  return reset();
}

void PointMaze::set_state_from_obs(const Vector& obs) {
  if (obs.size() != 4) throw ShapeError("maze: obs must have 4 entries");
  if (!obs.allFinite()) throw BoundsError("maze: non-finite observation");
  const int r = static_cast<int>(std::floor(obs[1]));
  const int c = static_cast<int>(std::floor(obs[0]));
  if (layout_.is_wall(r, c)) throw BoundsError("maze: observation lies in a wall cell");
  x_ = obs[0];
  y_ = obs[1];
  vx_ = obs[2];
  vy_ = obs[3];
  // The desired goal is hidden and not recoverable from an observation;
  // redraw it the same way reset does.
  goal_ = static_cast<int>(std::uniform_int_distribution<int>(0, 1)(rng_));
  steps_ = 0;
  done_ = false;
}

void PointMaze::set_state(double x, double y, double vx, double vy) {
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(vx) || !std::isfinite(vy))
    throw BoundsError("maze: non-finite state");
  if (layout_.is_wall(static_cast<int>(std::floor(y)), static_cast<int>(std::floor(x))))
    throw BoundsError("maze: state lies in a wall cell");
  x_ = x;
  y_ = y;
  vx_ = vx;
  vy_ = vy;
}

StepResult PointMaze::step(const Vector& action) {
  if (done_) throw ContractError("maze: step after episode end; call reset");
  if (action.size() != 2) throw ShapeError("maze: action must have 2 entries");
  const double fx = clamp(action[0], -1.0, 1.0);
  const double fy = clamp(action[1], -1.0, 1.0);

  vx_ = kDamp * vx_ + kMazeDt * fx;
  vy_ = kDamp * vy_ + kMazeDt * fy;

  // Axis-separable move: x first against the current row, then y against the
  // updated column. A blocked axis clamps at the wall face and zeroes that
  // velocity component.
  {
    const double nx = x_ + kMazeDt * vx_;
    const int r = static_cast<int>(std::floor(y_));
    const int c = static_cast<int>(std::floor(nx));
    if (layout_.is_wall(r, c)) {
      x_ = vx_ > 0.0 ? static_cast<double>(c) - kFaceMargin
                     : static_cast<double>(c + 1) + kFaceMargin;
      vx_ = 0.0;
    } else {
      x_ = nx;
    }
  }
  {
    const double ny = y_ + kMazeDt * vy_;
    const int r = static_cast<int>(std::floor(ny));
    const int c = static_cast<int>(std::floor(x_));
    if (layout_.is_wall(r, c)) {
      y_ = vy_ > 0.0 ? static_cast<double>(r) - kFaceMargin
                     : static_cast<double>(r + 1) + kFaceMargin;
      vy_ = 0.0;
    } else {
      y_ = ny;
    }
  }
  ++steps_;

  StepResult out;
  out.obs = obs();
  out.reward = -goal_distance();
  const bool reached = goal_distance() <= kGoalRadius;
  out.truncated = steps_ >= kMazeSteps && !reached;
  out.done = reached || out.truncated;
  done_ = out.done;
  return out;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Env> make_env(const std::string& env_name, std::uint64_t seed,
                              const std::optional<std::filesystem::path>& maze_file) {
  if (env_name == "pendulum") return std::make_unique<Pendulum>(seed);
  if (env_name == "maze") {
    MazeLayout layout = maze_file ? MazeLayout::load(*maze_file) : MazeLayout::default_layout();
    return std::make_unique<PointMaze>(std::move(layout), seed);
  }
  throw ParseError("unknown env '" + env_name + "' (expected pendulum|maze)");
}

}  // namespace lsac::envs
