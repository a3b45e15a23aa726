#include "lsac/buffers.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace lsac::buffers {

RingBuffer::RingBuffer(Index capacity, Index obs_dim, Index act_dim)
    : capacity_(capacity), obs_dim_(obs_dim), act_dim_(act_dim) {
  if (capacity <= 0 || obs_dim <= 0 || act_dim <= 0)
    throw ShapeError("RingBuffer: capacity and dims must be positive");
  data_ = Matrix::Zero(tuple_dim(), capacity_);
}

void RingBuffer::check_action(const Eigen::Ref<const Vector>& a) const {
  for (Index i = 0; i < a.size(); ++i)
    if (!(a[i] >= -1.0 && a[i] <= 1.0))
      throw BoundsError("RingBuffer: action component " + std::to_string(a[i]) +
                        " outside [-1,1]");
}

void RingBuffer::push(const Transition& t) {
  if (t.s.size() != obs_dim_ || t.s_next.size() != obs_dim_ || t.a.size() != act_dim_)
    throw ShapeError("RingBuffer: transition dims do not match buffer dims");
  check_action(t.a);
  Vector col(tuple_dim());
  col << t.s, t.a, t.r, t.s_next, t.done;
  push_tuple(col);
}

void RingBuffer::push_tuple(const Vector& tuple) {
  if (tuple.size() != tuple_dim()) throw ShapeError("RingBuffer: bad tuple length");
  check_action(tuple.segment(obs_dim_, act_dim_));
  data_.col(cursor_) = tuple;
  cursor_ = (cursor_ + 1) % capacity_;
  if (count_ < capacity_) ++count_;
}

void RingBuffer::clear() {
  cursor_ = 0;
  count_ = 0;
}

Vector RingBuffer::tuple(Index i) const {
  if (i < 0 || i >= count_) throw BoundsError("RingBuffer: index out of range");
  return data_.col(i);
}

Transition RingBuffer::get(Index i) const {
  const Vector col = tuple(i);
  Transition t;
  t.s = col.head(obs_dim_);
  t.a = col.segment(obs_dim_, act_dim_);
  t.r = col[obs_dim_ + act_dim_];
  t.s_next = col.segment(obs_dim_ + act_dim_ + 1, obs_dim_);
  t.done = col[tuple_dim() - 1];
  return t;
}

Batch RingBuffer::sample_uniform(Index k, std::mt19937_64& rng) const {
  if (count_ == 0) throw ContractError("RingBuffer: sample from empty buffer");
  if (k <= 0) throw ShapeError("RingBuffer: sample size must be positive");
  std::uniform_int_distribution<Index> pick(0, count_ - 1);
  Batch b;
  b.s.resize(obs_dim_, k);
  b.a.resize(act_dim_, k);
  b.r.resize(k);
  b.s_next.resize(obs_dim_, k);
  b.done.resize(k);
  b.diffusion_indices.reserve(k);
  for (Index j = 0; j < k; ++j) {
    const Index i = pick(rng);
    b.diffusion_indices.push_back(i);
    b.s.col(j) = data_.col(i).head(obs_dim_);
    b.a.col(j) = data_.col(i).segment(obs_dim_, act_dim_);
    b.r[j] = data_(obs_dim_ + act_dim_, i);
    b.s_next.col(j) = data_.col(i).segment(obs_dim_ + act_dim_ + 1, obs_dim_);
    b.done[j] = data_(tuple_dim() - 1, i);
  }
  return b;
}

void RingBuffer::overwrite_actions(const std::vector<Index>& indices, const Matrix& refined) {
  if (refined.rows() != act_dim_ || refined.cols() != static_cast<Index>(indices.size()))
    throw ShapeError("overwrite_actions: refined action shape mismatch");
  for (Index j = 0; j < refined.cols(); ++j) check_action(refined.col(j));
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const Index i = indices[j];
    if (i < 0 || i >= count_) throw BoundsError("overwrite_actions: index out of range");
    data_.col(i).segment(obs_dim_, act_dim_) = refined.col(static_cast<Index>(j));
  }
}

NormStats fit_norm_stats(const RingBuffer& buffer) {
  if (buffer.size() < 2)
    throw ContractError("fit_norm_stats: need at least 2 transitions");
  const auto X = buffer.tuples();
  const Index d = buffer.tuple_dim() - 1;  // done excluded
  NormStats st;
  st.mean = X.topRows(d).rowwise().mean();
  st.std.resize(d);
  const double n = static_cast<double>(buffer.size());
  for (Index i = 0; i < d; ++i) {
    const double var = (X.row(i).array() - st.mean[i]).square().sum() / n;
    st.std[i] = std::max(std::sqrt(var), 1e-8);
  }
  return st;
}

Matrix normalize_tuples(const Matrix& tuples, const NormStats& stats) {
  if (tuples.rows() != stats.dim() + 1)
    throw ShapeError("normalize_tuples: row count does not match stats");
  Matrix out = tuples;
  out.topRows(stats.dim()) =
      (tuples.topRows(stats.dim()).colwise() - stats.mean).array().colwise() /
      stats.std.array();
  return out;
}

Matrix denormalize_tuples(const Matrix& tuples_hat, const NormStats& stats) {
  if (tuples_hat.rows() != stats.dim() + 1)
    throw ShapeError("denormalize_tuples: row count does not match stats");
  Matrix out = tuples_hat;
  out.topRows(stats.dim()) =
      (tuples_hat.topRows(stats.dim()).array().colwise() * stats.std.array()).colwise() +
      stats.mean.array();
  out.row(stats.dim()) =
      (tuples_hat.row(stats.dim()).array() >= 0.5).cast<double>();
  return out;
}

namespace {

Vector pack(const Transition& t) {
  Vector col(t.s.size() + t.a.size() + 1 + t.s_next.size() + 1);
  col << t.s, t.a, t.r, t.s_next, t.done;
  return col;
}

Transition unpack(const Vector& col, Index obs_dim, Index act_dim) {
  Transition t;
  t.s = col.head(obs_dim);
  t.a = col.segment(obs_dim, act_dim);
  t.r = col[obs_dim + act_dim];
  t.s_next = col.segment(obs_dim + act_dim + 1, obs_dim);
  t.done = col[col.size() - 1];
  return t;
}

}  // namespace

Transition normalize(const Transition& t, const NormStats& stats) {
  Vector col = pack(t);
  if (col.size() != stats.dim() + 1) throw ShapeError("normalize: dim mismatch");
  col.head(stats.dim()) =
      (col.head(stats.dim()) - stats.mean).cwiseQuotient(stats.std);
  return unpack(col, t.s.size(), t.a.size());
}

Transition denormalize(const Transition& t_hat, const NormStats& stats) {
  Vector col = pack(t_hat);
  if (col.size() != stats.dim() + 1) throw ShapeError("denormalize: dim mismatch");
  col.head(stats.dim()) =
      col.head(stats.dim()).cwiseProduct(stats.std) + stats.mean;
  col[stats.dim()] = col[stats.dim()] >= 0.5 ? 1.0 : 0.0;
  return unpack(col, t_hat.s.size(), t_hat.a.size());
}

Batch mixed_batch(const RingBuffer& replay, const RingBuffer& diffusion, Index k,
                  double ratio, std::mt19937_64& rng) {
  if (ratio < 0.0 || ratio > 1.0) throw BoundsError("mixed_batch: ratio outside [0,1]");
  const Index n_replay = static_cast<Index>(std::floor(static_cast<double>(k) * (1.0 - ratio)));
  const Index n_diff = k - n_replay;
  if (n_replay > 0 && replay.size() == 0)
    throw ContractError("mixed_batch: replay share requested from empty replay buffer");
  if (n_diff > 0 && diffusion.size() == 0)
    throw ContractError("mixed_batch: synthetic share requested from empty diffusion buffer");

  Batch out;
  if (n_replay > 0 && n_diff > 0) {
    Batch br = replay.sample_uniform(n_replay, rng);
    Batch bd = diffusion.sample_uniform(n_diff, rng);
    out.s.resize(br.s.rows(), k);
    out.a.resize(br.a.rows(), k);
    out.r.resize(k);
    out.s_next.resize(br.s_next.rows(), k);
    out.done.resize(k);
    out.s << br.s, bd.s;
    out.a << br.a, bd.a;
    out.r << br.r, bd.r;
    out.s_next << br.s_next, bd.s_next;
    out.done << br.done, bd.done;
    out.diffusion_indices = std::move(bd.diffusion_indices);
  } else if (n_replay > 0) {
    out = replay.sample_uniform(n_replay, rng);
    out.diffusion_indices.clear();
  } else {
    out = diffusion.sample_uniform(n_diff, rng);
  }
  out.replay_count = n_replay;
  return out;
}

void dump(const std::filesystem::path& path, const RingBuffer& buffer, bool synthetic) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("dump: cannot open " + path.string());
  nlohmann::json header = {{"format", "lsac-dump"},
                           {"version", 1},
                           {"obs_dim", buffer.obs_dim()},
                           {"act_dim", buffer.act_dim()},
                           {"count", buffer.size()},
                           {"synthetic", synthetic}};
  os << header.dump() << '\n';
  const auto X = buffer.tuples();
  std::vector<float> row(static_cast<std::size_t>(buffer.tuple_dim()));
  for (Index i = 0; i < buffer.size(); ++i) {
    for (Index j = 0; j < buffer.tuple_dim(); ++j) {
      float f = static_cast<float>(X(j, i));
      if constexpr (std::endian::native != std::endian::little) {
        auto b = std::bit_cast<std::array<unsigned char, 4>>(f);
        std::swap(b[0], b[3]);
        std::swap(b[1], b[2]);
        f = std::bit_cast<float>(b);
      }
      row[static_cast<std::size_t>(j)] = f;
    }
    os.write(reinterpret_cast<const char*>(row.data()),
             static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
}

void load_dump(const std::filesystem::path& path, RingBuffer& buffer, bool* synthetic) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("load_dump: cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw ParseError("load_dump: missing header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("load_dump: bad header: " + std::string(e.what()));
  }
  if (header.value("format", "") != "lsac-dump")
    throw ParseError("load_dump: not a buffer dump");
  if (header.at("obs_dim") != buffer.obs_dim() || header.at("act_dim") != buffer.act_dim())
    throw ShapeError("load_dump: dims do not match target buffer");
  if (synthetic) *synthetic = header.value("synthetic", false);
  const Index count = header.at("count").get<Index>();
  std::vector<float> row(static_cast<std::size_t>(buffer.tuple_dim()));
  Vector col(buffer.tuple_dim());
  for (Index i = 0; i < count; ++i) {
    is.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!is) throw ParseError("load_dump: truncated payload");
    for (Index j = 0; j < buffer.tuple_dim(); ++j) {
      float f = row[static_cast<std::size_t>(j)];
      if constexpr (std::endian::native != std::endian::little) {
        auto b = std::bit_cast<std::array<unsigned char, 4>>(f);
        std::swap(b[0], b[3]);
        std::swap(b[1], b[2]);
        f = std::bit_cast<float>(b);
      }
      col[j] = static_cast<double>(f);
    }
    buffer.push_tuple(col);
  }
}

}  // namespace lsac::buffers
