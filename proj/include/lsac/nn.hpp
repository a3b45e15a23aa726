#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lsac/common.hpp"

namespace lsac::nn {

inline constexpr double kInvSqrt2 = 0.7071067811865476;
inline constexpr double kInvSqrt2Pi = 0.3989422804014327;

// Exact GELU, x * Phi(x) with the Gaussian CDF (no tanh approximation).
inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

// d/dx gelu = Phi(x) + x * phi(x).
inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

template <typename Derived>
auto gelu(const Eigen::ArrayBase<Derived>& x) {
  return x.unaryExpr([](double v) { return gelu(v); });
}

template <typename Derived>
auto gelu_grad(const Eigen::ArrayBase<Derived>& x) {
  return x.unaryExpr([](double v) { return gelu_grad(v); });
}

inline double softplus(double x) {
  // Overflow-safe log(1 + e^x).
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

inline double softplus_grad(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Layout of a flattened parameter vector: named blocks at fixed offsets.
struct ParamManifest {
  struct Entry {
    std::string name;
    Index rows = 0;
    Index cols = 0;
    Index offset = 0;
  };
  std::vector<Entry> entries;
  Index total = 0;

  const Entry& find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return e;
    throw ShapeError("manifest: no entry named '" + name + "'");
  }
};

struct ForwardCache;

/// Fully connected net: affine layers with GELU hidden activations and an
/// identity output layer. Batches are column-per-sample matrices.
class DenseNet {
 public:
  DenseNet() = default;
  explicit DenseNet(std::vector<Index> dims);

  Index input_dim() const { return dims_.front(); }
  Index output_dim() const { return dims_.back(); }
  const std::vector<Index>& dims() const { return dims_; }
  Index num_layers() const { return static_cast<Index>(weights_.size()); }

  /// Uniform(-sqrt(3/fan_in), sqrt(3/fan_in)) weights (std 1/sqrt(fan_in)),
  /// zero biases.
  void init(std::mt19937_64& rng);

  /// Forward pass. When `cache` is given it is filled for a later backward.
  Matrix forward(const Matrix& x, ForwardCache* cache = nullptr) const;

  /// Parameter gradient for upstream dY (out x batch); gradients are summed
  /// over the batch (callers divide by batch size as needed). Optionally also
  /// yields the gradient w.r.t. the input batch.
  Vector backward(const ForwardCache& cache, const Matrix& d_out,
                  Matrix* d_input = nullptr) const;

  const ParamManifest& manifest() const { return manifest_; }
  Index param_count() const { return manifest_.total; }
  Vector params() const;
  void set_params(const Vector& flat);
  std::uint64_t revision() const { return revision_; }

  const Matrix& weight(Index layer) const { return weights_[layer]; }
  const Vector& bias(Index layer) const { return biases_[layer]; }

 private:
  std::vector<Index> dims_;
  std::vector<Matrix> weights_;  // weights_[l] is dims_[l+1] x dims_[l]
  std::vector<Vector> biases_;
  ParamManifest manifest_;
  std::uint64_t revision_ = 0;

  void check_input(const Matrix& x) const;
};

/// Per-layer activations retained by forward() for the backward pass. Tied to
/// the parameter revision it was computed under; backward() through a net
/// whose parameters have since changed raises ContractError.
struct ForwardCache {
  Matrix input;
  std::vector<Matrix> pre;   // pre-activations per layer
  std::vector<Matrix> post;  // activations per layer (post[last] == output)
  std::uint64_t revision = 0;
  const DenseNet* net = nullptr;
};

/// target <- tau * online + (1 - tau) * target, elementwise over all params.
void polyak_update(DenseNet& target, const DenseNet& online, double tau);

/// In-place global-norm clip; returns the pre-clip norm.
double clip_global_norm(Vector& g, double max_norm);

/// Standard Adam with bias correction (the Langevin sampler has its own
/// preconditioner and does not use this).
struct AdamState {
  Vector m;
  Vector v;
  std::int64_t t = 0;

  explicit AdamState(Index n = 0) : m(Vector::Zero(n)), v(Vector::Zero(n)) {}
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One Adam step in place on `params`.
void adam_step(Vector& params, const Vector& grad, AdamState& state,
               const AdamConfig& cfg);

}  // namespace lsac::nn
