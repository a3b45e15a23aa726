#include "lsac/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

namespace lsac::ckpt {
namespace {

json manifest_json(const nn::ParamManifest& m) {
  json entries = json::array();
  for (const auto& e : m.entries)
    entries.push_back({{"name", e.name}, {"rows", e.rows}, {"cols", e.cols}, {"offset", e.offset}});
  return entries;
}

void check_manifest(const json& stored, const nn::ParamManifest& m,
                    const std::string& path) {
  if (!stored.is_array() || stored.size() != m.entries.size())
    throw ParseError(path + ": manifest entry count mismatch");
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    const auto& s = stored[i];
    if (s.at("name") != e.name || s.at("rows") != e.rows || s.at("cols") != e.cols ||
        s.at("offset") != e.offset)
      throw ParseError(path + ": manifest mismatch at entry '" + e.name + "'");
  }
}

void write_doubles(std::ostream& os, const Vector& v) {
  for (Index i = 0; i < v.size(); ++i) {
    const std::uint64_t bits = double_to_le_bits(v[i]);
    os.write(reinterpret_cast<const char*>(&bits), 8);
  }
}

Vector read_doubles(std::istream& is, Index n, const std::string& path) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) {
    std::uint64_t bits = 0;
    is.read(reinterpret_cast<char*>(&bits), 8);
    if (!is) throw ParseError(path + ": truncated payload");
    v[i] = double_to_le_bits_inverse(bits);
  }
  return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("cannot open for writing: " + path.string());
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open: " + path.string());
  return is;
}

json read_header_stream(std::istream& is, const std::string& path) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError(path + ": missing header line");
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": bad header: " + e.what());
  }
}

}  // namespace

void save_net(const std::filesystem::path& path, const nn::DenseNet& net,
              std::uint64_t seed) {
  auto os = open_out(path);
  json header = {{"format", "lsac-net"},
                 {"version", 1},
                 {"seed", seed},
                 {"dims", net.dims()},
                 {"count", net.param_count()},
                 {"manifest", manifest_json(net.manifest())}};
  os << header.dump() << '\n';
  write_doubles(os, net.params());
}

void load_net(const std::filesystem::path& path, nn::DenseNet& net) {
  auto is = open_in(path);
  const json header = read_header_stream(is, path.string());
  if (header.value("format", "") != "lsac-net")
    throw ParseError(path.string() + ": not a net checkpoint");
  check_manifest(header.at("manifest"), net.manifest(), path.string());
  net.set_params(read_doubles(is, net.param_count(), path.string()));
}

void save_chain(const std::filesystem::path& path, const nn::DenseNet& net,
                const ChainCheckpoint& chain, std::uint64_t seed) {
  const Index n = net.param_count();
  if (chain.params.size() != n || chain.m.size() != n || chain.v.size() != n)
    throw ShapeError("save_chain: section sizes must equal param count");
  auto os = open_out(path);
  json header = {{"format", "lsac-chain"},
                 {"version", 1},
                 {"seed", seed},
                 {"dims", net.dims()},
                 {"count", n},
                 {"sections", {"params", "m", "v"}},
                 {"step", chain.step},
                 {"rng", chain.rng_state},
                 {"manifest", manifest_json(net.manifest())}};
  os << header.dump() << '\n';
  write_doubles(os, chain.params);
  write_doubles(os, chain.m);
  write_doubles(os, chain.v);
}

ChainCheckpoint load_chain(const std::filesystem::path& path, nn::DenseNet& net) {
  auto is = open_in(path);
  const json header = read_header_stream(is, path.string());
  if (header.value("format", "") != "lsac-chain")
    throw ParseError(path.string() + ": not a chain checkpoint");
  check_manifest(header.at("manifest"), net.manifest(), path.string());
  ChainCheckpoint out;
  const Index n = net.param_count();
  out.params = read_doubles(is, n, path.string());
  out.m = read_doubles(is, n, path.string());
  out.v = read_doubles(is, n, path.string());
  out.step = header.at("step").get<std::int64_t>();
  out.rng_state = header.at("rng").get<std::string>();
  net.set_params(out.params);
  return out;
}

json read_header(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_header_stream(is, path.string());
}

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream ss;
  ss << rng;
  return ss.str();
}

std::mt19937_64 rng_from_string(const std::string& s) {
  std::mt19937_64 rng;
  std::istringstream ss(s);
  ss >> rng;
  if (ss.fail()) throw ParseError("invalid RNG state string");
  return rng;
}

}  // namespace lsac::ckpt
