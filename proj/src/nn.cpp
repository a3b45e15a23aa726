#include "lsac/nn.hpp"

#include <cmath>

namespace lsac::nn {

DenseNet::DenseNet(std::vector<Index> dims) : dims_(std::move(dims)) {
  if (dims_.size() < 2) throw ShapeError("DenseNet needs at least input and output dims");
  for (Index d : dims_)
    if (d <= 0) throw ShapeError("DenseNet dims must be positive");
  Index offset = 0;
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    const Index in = dims_[l], out = dims_[l + 1];
    weights_.emplace_back(Matrix::Zero(out, in));
    biases_.emplace_back(Vector::Zero(out));
    manifest_.entries.push_back({"W" + std::to_string(l), out, in, offset});
    offset += out * in;
    manifest_.entries.push_back({"b" + std::to_string(l), out, 1, offset});
    offset += out;
  }
  manifest_.total = offset;
}

void DenseNet::init(std::mt19937_64& rng) {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const double bound = std::sqrt(3.0 / static_cast<double>(dims_[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Index j = 0; j < weights_[l].cols(); ++j)
      for (Index i = 0; i < weights_[l].rows(); ++i) weights_[l](i, j) = u(rng);
    biases_[l].setZero();
  }
  ++revision_;
}

void DenseNet::check_input(const Matrix& x) const {
  if (x.rows() != input_dim())
    throw ShapeError("DenseNet forward: input has " + std::to_string(x.rows()) +
                     " rows, expected " + std::to_string(input_dim()));
}

Matrix DenseNet::forward(const Matrix& x, ForwardCache* cache) const {
  check_input(x);
  if (cache) {
    cache->input = x;
    cache->pre.assign(weights_.size(), Matrix());
    cache->post.assign(weights_.size(), Matrix());
    cache->revision = revision_;
    cache->net = this;
  }
  Matrix h = x;
  const std::size_t last = weights_.size() - 1;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Matrix z = (weights_[l] * h).colwise() + biases_[l];
    if (l == last) {
      if (cache) cache->pre[l] = z, cache->post[l] = z;
      h = std::move(z);
    } else {
      Matrix a = gelu(z.array()).matrix();
      if (cache) cache->pre[l] = std::move(z), cache->post[l] = a;
      h = std::move(a);
    }
  }
  return h;
}

Vector DenseNet::backward(const ForwardCache& cache, const Matrix& d_out,
                          Matrix* d_input) const {
  if (cache.net != this) throw ContractError("backward: cache from another net");
  if (cache.revision != revision_)
    throw ContractError("backward: cache is stale (parameters changed since forward)");
  if (d_out.rows() != output_dim() || d_out.cols() != cache.input.cols())
    throw ShapeError("backward: d_out shape mismatch");

  Vector grad = Vector::Zero(manifest_.total);
  Matrix delta = d_out;  // gradient w.r.t. pre-activation of current layer
  for (std::size_t li = weights_.size(); li-- > 0;) {
    if (li + 1 < weights_.size())
      delta = delta.cwiseProduct(gelu_grad(cache.pre[li].array()).matrix());
    const Matrix& below = li == 0 ? cache.input : cache.post[li - 1];
    const auto& wE = manifest_.entries[2 * li];
    const auto& bE = manifest_.entries[2 * li + 1];
    Eigen::Map<Matrix>(grad.data() + wE.offset, wE.rows, wE.cols) = delta * below.transpose();
    Eigen::Map<Vector>(grad.data() + bE.offset, bE.rows) = delta.rowwise().sum();
    if (li > 0 || d_input) {
      Matrix next = weights_[li].transpose() * delta;
      if (li == 0) {
        *d_input = std::move(next);
      } else {
        delta = std::move(next);
      }
    }
  }
  return grad;
}

Vector DenseNet::params() const {
  Vector flat(manifest_.total);
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const auto& wE = manifest_.entries[2 * l];
    const auto& bE = manifest_.entries[2 * l + 1];
    Eigen::Map<Matrix>(flat.data() + wE.offset, wE.rows, wE.cols) = weights_[l];
    Eigen::Map<Vector>(flat.data() + bE.offset, bE.rows) = biases_[l];
  }
  return flat;
}

void DenseNet::set_params(const Vector& flat) {
  if (flat.size() != manifest_.total)
    throw ShapeError("set_params: expected " + std::to_string(manifest_.total) +
                     " values, got " + std::to_string(flat.size()));
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const auto& wE = manifest_.entries[2 * l];
    const auto& bE = manifest_.entries[2 * l + 1];
    weights_[l] = Eigen::Map<const Matrix>(flat.data() + wE.offset, wE.rows, wE.cols);
    biases_[l] = Eigen::Map<const Vector>(flat.data() + bE.offset, bE.rows);
  }
  ++revision_;
}

void polyak_update(DenseNet& target, const DenseNet& online, double tau) {
  if (target.dims() != online.dims())
    throw ShapeError("polyak_update: target/online dims differ");
  Vector mixed = tau * online.params() + (1.0 - tau) * target.params();
  target.set_params(mixed);
}

double clip_global_norm(Vector& g, double max_norm) {
  const double norm = g.norm();
  if (norm > max_norm && norm > 0.0) g *= max_norm / norm;
  return norm;
}

void adam_step(Vector& params, const Vector& grad, AdamState& state,
               const AdamConfig& cfg) {
  if (params.size() != grad.size() || params.size() != state.m.size())
    throw ShapeError("adam_step: size mismatch");
  ++state.t;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  params.array() -= cfg.lr * (state.m.array() / c1) /
                    ((state.v.array() / c2).sqrt() + cfg.eps);
}

}  // namespace lsac::nn
