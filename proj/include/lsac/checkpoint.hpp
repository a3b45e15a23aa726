#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <json.hpp>

#include "lsac/common.hpp"
#include "lsac/nn.hpp"

namespace lsac::ckpt {

using json = nlohmann::json;

// On-disk layout shared by every checkpoint: one line of compact UTF-8 JSON
// (manifest entries, seed, format version) terminated by '\n', then the flat
// values as little-endian IEEE-754 doubles in manifest order. Chain
// checkpoints append extra sections (m, v) after the parameter section and
// carry the sampler step and RNG state in the header.

struct ChainCheckpoint {
  Vector params;
  Vector m;
  Vector v;
  std::int64_t step = 0;
  std::string rng_state;  // serialized std::mt19937_64
};

void save_net(const std::filesystem::path& path, const nn::DenseNet& net,
              std::uint64_t seed);

/// Loads into `net`; the stored manifest must match the net's exactly.
void load_net(const std::filesystem::path& path, nn::DenseNet& net);

void save_chain(const std::filesystem::path& path, const nn::DenseNet& net,
                const ChainCheckpoint& chain, std::uint64_t seed);

ChainCheckpoint load_chain(const std::filesystem::path& path, nn::DenseNet& net);

/// Reads just the JSON header line of any checkpoint or dump file.
json read_header(const std::filesystem::path& path);

std::string rng_to_string(const std::mt19937_64& rng);
std::mt19937_64 rng_from_string(const std::string& s);

}  // namespace lsac::ckpt
