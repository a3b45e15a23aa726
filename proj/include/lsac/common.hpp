#pragma once

#include <Eigen/Dense>

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace lsac {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Thrown when matrix/vector dimensions or manifests disagree.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown on API misuse: stale caches, stepping a finished episode, etc.
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BoundsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A critic chain hit a non-finite gradient; training must abort.
struct ChainPoisonedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// SplitMix64 step; used to derive independent seeds for named substreams
// so that e.g. chain noise and chain init never share a generator state.
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Checkpoint payloads are little-endian on disk regardless of host.
inline std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffULL) << (8 * (7 - i));
    return r;
  }
}

inline double double_to_le_bits_inverse(std::uint64_t bits) {
  return std::bit_cast<double>(to_little_endian(bits));
}

inline std::uint64_t double_to_le_bits(double d) {
  return to_little_endian(std::bit_cast<std::uint64_t>(d));
}

}  // namespace lsac
