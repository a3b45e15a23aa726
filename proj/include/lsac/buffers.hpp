#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "lsac/common.hpp"

namespace lsac::buffers {

struct Transition {
  Vector s;
  Vector a;  // normalized action in [-1,1]^d
  double r = 0.0;
  Vector s_next;
  double done = 0.0;  // {0,1}; truncation already stripped by the writer
};

/// Column-per-sample batch. Provenance fields let the trainer write refined
/// synthetic actions back to the diffusion buffer.
struct Batch {
  Matrix s;       // obs_dim x k
  Matrix a;       // act_dim x k
  Vector r;       // k
  Matrix s_next;  // obs_dim x k
  Vector done;    // k
  Index replay_count = 0;              // leading columns drawn from replay
  std::vector<Index> diffusion_indices;  // buffer rows of the trailing columns

  Index size() const { return s.cols(); }
};

/// Fixed-capacity FIFO transition store. Internally each transition is one
/// column of the flat tuple (s, a, r, s', done), which keeps sampling and
/// statistics as plain Eigen block operations.
class RingBuffer {
 public:
  RingBuffer(Index capacity, Index obs_dim, Index act_dim);

  Index capacity() const { return capacity_; }
  Index size() const { return count_; }
  Index obs_dim() const { return obs_dim_; }
  Index act_dim() const { return act_dim_; }
  Index tuple_dim() const { return 2 * obs_dim_ + act_dim_ + 2; }

  void push(const Transition& t);
  /// Pushes one flat tuple column (s, a, r, s', done); actions must already
  /// be in [-1,1]^d.
  void push_tuple(const Vector& tuple);
  void clear();

  Transition get(Index i) const;
  Vector tuple(Index i) const;

  /// I.i.d. uniform with replacement; records the drawn indices.
  Batch sample_uniform(Index k, std::mt19937_64& rng) const;

  /// All stored tuples as columns (view over the live prefix).
  Eigen::Block<const Matrix, Eigen::Dynamic, Eigen::Dynamic, true> tuples() const {
    return data_.leftCols(count_);
  }

  void overwrite_actions(const std::vector<Index>& indices, const Matrix& refined);

 private:
  Index capacity_, obs_dim_, act_dim_;
  Index cursor_ = 0, count_ = 0;
  Matrix data_;  // tuple_dim x capacity

  void check_action(const Eigen::Ref<const Vector>& a) const;
};

/// Per-dimension mean/std over (s, a, r, s'); done is excluded and passes
/// through normalization untouched.
struct NormStats {
  Vector mean;  // tuple_dim - 1
  Vector std;   // floored at 1e-8

  Index dim() const { return mean.size(); }
};

/// Population statistics over all stored transitions; requires >= 2 samples.
NormStats fit_norm_stats(const RingBuffer& buffer);

/// Columns are flat tuples with done in the last row.
Matrix normalize_tuples(const Matrix& tuples, const NormStats& stats);

/// Inverts normalize and thresholds the done row at 0.5 to {0,1}.
Matrix denormalize_tuples(const Matrix& tuples_hat, const NormStats& stats);

Transition normalize(const Transition& t, const NormStats& stats);
Transition denormalize(const Transition& t_hat, const NormStats& stats);

/// floor(k*(1-ratio)) replay columns followed by the diffusion remainder;
/// the composition is exact in counts, never probabilistic.
Batch mixed_batch(const RingBuffer& replay, const RingBuffer& diffusion, Index k,
                  double ratio, std::mt19937_64& rng);

/// Header (single-line JSON: dims, count, version, synthetic flag) then
/// row-major little-endian f32 tuples.
void dump(const std::filesystem::path& path, const RingBuffer& buffer, bool synthetic);
void load_dump(const std::filesystem::path& path, RingBuffer& buffer, bool* synthetic = nullptr);

}  // namespace lsac::buffers
