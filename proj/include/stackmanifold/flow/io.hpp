#pragma once

#include "stackmanifold/flow/model.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace stackmanifold::flow {

inline constexpr std::uint32_t kModelVersion = 1;
inline constexpr std::size_t kHeaderBytes = 32;

namespace detail {

inline void put_le(std::vector<unsigned char>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint64_t(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

/// Layout: "SMFL", u32 version, u32 D, u32 dim_a, u32 dim_b, u32 layers,
/// u64 seed, then every weight as f64 in parameter order. The hidden width
/// is implied by the weight count.
inline std::vector<unsigned char> serialize(const FlowModel& m) {
  std::vector<unsigned char> out{'S', 'M', 'F', 'L'};
  const FlowConfig& c = m.config();
  detail::put_le(out, kModelVersion, 4);
  detail::put_le(out, std::uint32_t(c.D), 4);
  detail::put_le(out, std::uint32_t(c.dim_a), 4);
  detail::put_le(out, std::uint32_t(c.dim_b), 4);
  detail::put_le(out, std::uint32_t(c.layers), 4);
  detail::put_le(out, c.seed, 8);
  out.reserve(kHeaderBytes + std::size_t(m.param_count()) * 8);
  for (Eigen::Index i = 0; i < m.param_count(); ++i) {
    std::uint64_t bits;
    const double w = m.params()[i];
    std::memcpy(&bits, &w, sizeof bits);
    detail::put_le(out, bits, 8);
  }
  return out;
}

inline FlowModel deserialize(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < kHeaderBytes) throw Error(ErrorKind::TruncatedFile, "model file shorter than its header");
  if (std::memcmp(bytes.data(), "SMFL", 4) != 0) throw Error(ErrorKind::TruncatedFile, "bad magic");
  const auto version = std::uint32_t(detail::get_le(bytes.data() + 4, 4));
  if (version != kModelVersion)
    throw Error(ErrorKind::VersionMismatch, "model version " + std::to_string(version) + ", expected " +
                                                std::to_string(kModelVersion));
  FlowConfig cfg;
  cfg.D = int(detail::get_le(bytes.data() + 8, 4));
  cfg.dim_a = int(detail::get_le(bytes.data() + 12, 4));
  cfg.dim_b = int(detail::get_le(bytes.data() + 16, 4));
  cfg.layers = int(detail::get_le(bytes.data() + 20, 4));
  cfg.seed = detail::get_le(bytes.data() + 24, 8);
  if (cfg.D < 3 || cfg.D > 4096 || cfg.dim_a < 1 || cfg.dim_b < 1 || cfg.layers < 1 || cfg.dim_a > 4096 ||
      cfg.dim_b > 4096 || cfg.layers > 4096)
    throw Error(ErrorKind::TruncatedFile, "implausible model header");
  const std::size_t payload = bytes.size() - kHeaderBytes;
  if (payload % 8 != 0) throw Error(ErrorKind::TruncatedFile, "weight block is not a whole number of f64");
  const auto count = Eigen::Index(payload / 8);
  const auto affine = FlowModel::param_count_affine(cfg);
  if (count <= affine[1] || (count - affine[1]) % affine[0] != 0)
    throw Error(ErrorKind::TruncatedFile, "weight count does not match any hidden width");
  cfg.hidden = int((count - affine[1]) / affine[0]);
  Vector w(count);
  for (Eigen::Index i = 0; i < count; ++i) {
    const std::uint64_t bits = detail::get_le(bytes.data() + kHeaderBytes + std::size_t(i) * 8, 8);
    std::memcpy(&w[i], &bits, sizeof bits);
  }
  return FlowModel(cfg, std::move(w));
}

inline void save_model(const FlowModel& m, const std::string& path) {
  const auto bytes = serialize(m);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::Io, "cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw Error(ErrorKind::Io, "write failed for " + path);
}

inline FlowModel load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Io, "cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

inline std::size_t model_file_size(const FlowModel& m) { return kHeaderBytes + std::size_t(m.param_count()) * 8; }

}  // namespace stackmanifold::flow
