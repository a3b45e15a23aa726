#pragma once

#include <random>

#include "lsac/buffers.hpp"
#include "lsac/common.hpp"
#include "lsac/dist_critic.hpp"
#include "lsac/nn.hpp"

namespace lsac::diffusion {

/// Linear-beta DDPM schedule; alpha_bars[t-1] = prod_{i<=t} (1 - beta_i),
/// with the t = 0 convention alpha_bar_0 = 1 implicit in the indexing.
struct NoiseSchedule {
  int T = 0;
  Vector betas;
  Vector alpha_bars;
};

NoiseSchedule make_schedule(int T, double beta_min, double beta_max);

/// Epsilon-prediction denoiser over the full normalized transition tuple
/// (s, a, r, s', done) concatenated with a sinusoidal time embedding.
class Denoiser {
 public:
  Denoiser(Index tuple_dim, const std::vector<Index>& hidden, Index emb_dim = 16);

  Index tuple_dim() const { return tuple_dim_; }
  Index emb_dim() const { return emb_dim_; }
  nn::DenseNet& net() { return net_; }
  const nn::DenseNet& net() const { return net_; }
  void init(std::mt19937_64& rng) { net_.init(rng); }

  Vector time_embedding(int t) const;

  /// eps_theta(x_t, t) for a batch of noised tuples (columns).
  Matrix predict(const Matrix& x_t, int t, nn::ForwardCache* cache = nullptr) const;

 private:
  Index tuple_dim_, emb_dim_;
  nn::DenseNet net_;
};

/// Normalized tuple batch; construction through wrap() is the caller's
/// promise that buffers::normalize_tuples has been applied.
struct NormalizedBatch {
  Matrix x;
  bool normalized = false;

  static NormalizedBatch wrap(Matrix tuples) {
    NormalizedBatch b;
    b.x = std::move(tuples);
    b.normalized = true;
    return b;
  }
};

struct DenoiserLoss {
  double loss = 0.0;
  Vector grad;
};

/// Monte-Carlo denoising score-matching loss: per column draw t ~ U{1..T}
/// and z ~ N(0,I), loss = mean_j || z - eps_theta(sqrt(abar_t)x + sqrt(1-abar_t)z, t) ||^2.
DenoiserLoss denoiser_loss(const Denoiser& denoiser, const NoiseSchedule& schedule,
                           const NormalizedBatch& batch, std::mt19937_64& rng);

/// Deterministic core of the same loss with the per-column timesteps and the
/// noise draw supplied by the caller.
DenoiserLoss denoiser_loss_at(const Denoiser& denoiser, const NoiseSchedule& schedule,
                              const NormalizedBatch& batch, const std::vector<int>& ts,
                              const Matrix& z);

/// Adam training loop over minibatches drawn from the normalized tuple pool.
/// Returns the mean loss over the final 10% of steps.
double train_denoiser(Denoiser& denoiser, const NoiseSchedule& schedule,
                      const Matrix& normalized_tuples, int steps, Index batch_size,
                      double lr, std::mt19937_64& rng);

/// Ancestral sampling from x_T ~ N(0,I), then denormalization, action clamp
/// to [-1,1] and done thresholding at 0.5. Columns are raw-space tuples laid
/// out (s, a, r, s', done).
Matrix sample_transitions(const Denoiser& denoiser, const NoiseSchedule& schedule,
                          Index count, const buffers::NormStats& stats,
                          Index obs_dim, Index act_dim, std::mt19937_64& rng);

struct RefineConfig {
  double beta_a = 3e-4;  // action-gradient learning rate
  double m1 = 0.9;
  double m2 = 0.99;
  int steps = 1;
  double eps = 1e-8;
};

/// Moment-preconditioned ascent of the critic's mean head over the actions,
/// fresh moments per call, result clamped to [-1,1]^d.
Matrix refine_actions(const Matrix& states, const Matrix& actions,
                      const dist_critic::CriticNet& critic, const RefineConfig& cfg);

}  // namespace lsac::diffusion
