// Parameter checkpoints. Little-endian binary layout (byte offsets):
//
//   0   4   magic "MVDC"
//   4   4   u32 format version (1)
//   8   8   u64 digest: FNV-1a64 of the config's model text
//   16  4   u32 length L of the embedded canonical config text
//   20  L   config text (UTF-8)
//       4   u32 parameter count
//   per parameter, in creation order:
//       2   u16 name length, then the name bytes
//       1   u8 rank, then rank * u32 extents
//       8*n f64 values, row-major
//
// Values are stored as f64 regardless of the training precision.
#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "mvdepth/config.hpp"
#include "mvdepth/model.hpp"

namespace mvdepth {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

namespace detail {

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (in.gcount() != sizeof v) throw DataError("truncated checkpoint " + path);
  return v;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[4] = {'M', 'V', 'D', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename S>
void save_checkpoint(const std::string& path, const RunConfig& cfg,
                     const ParamStore<S>& store) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out.write(kCheckpointMagic, 4);
  detail::write_pod(out, kCheckpointVersion);
  detail::write_pod(out, cfg.model_digest());
  const std::string text = cfg.to_text();
  detail::write_pod(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  detail::write_pod(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& e : store) {
    detail::write_pod(out, static_cast<std::uint16_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    detail::write_pod(out, static_cast<std::uint8_t>(e.value.rank()));
    for (int d = 0; d < e.value.rank(); ++d)
      detail::write_pod(out, static_cast<std::uint32_t>(e.value.dim(d)));
    for (S v : e.value.values()) detail::write_pod(out, static_cast<double>(v));
  }
  if (!out) throw DataError("failed writing checkpoint " + path);
}

struct LoadedCheckpoint {
  RunConfig config;
  std::string config_text;
  std::uint64_t digest = 0;
  std::vector<std::pair<std::string, Tensor<double>>> params;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw DataError("not a checkpoint file: " + path);
  const auto version = detail::read_pod<std::uint32_t>(in, path);
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version in " + path);

  LoadedCheckpoint ck;
  ck.digest = detail::read_pod<std::uint64_t>(in, path);
  const auto text_len = detail::read_pod<std::uint32_t>(in, path);
  ck.config_text.resize(text_len);
  in.read(ck.config_text.data(), text_len);
  if (in.gcount() != static_cast<std::streamsize>(text_len))
    throw DataError("truncated checkpoint " + path);
  ck.config = RunConfig::from_text(ck.config_text, path + " (embedded config)");
  if (ck.config.model_digest() != ck.digest)
    throw DataError("checkpoint digest mismatch in " + path);

  const auto count = detail::read_pod<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = detail::read_pod<std::uint16_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (in.gcount() != static_cast<std::streamsize>(name_len))
      throw DataError("truncated checkpoint " + path);
    const auto rank = detail::read_pod<std::uint8_t>(in, path);
    Shape shape;
    for (int d = 0; d < rank; ++d)
      shape.push_back(detail::read_pod<std::uint32_t>(in, path));
    std::vector<double> values(static_cast<std::size_t>(shape_numel(shape)));
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(values.size() * sizeof(double)))
      throw DataError("truncated checkpoint " + path);
    ck.params.emplace_back(std::move(name), Tensor<double>(std::move(shape), std::move(values)));
  }
  return ck;
}

// Copy checkpoint parameters into a freshly built model; names and shapes
// must match exactly.
template <typename S>
void restore_params(const LoadedCheckpoint& ck, ParamStore<S>& store) {
  if (ck.params.size() != store.size())
    throw DataError("checkpoint parameter count does not match the model");
  std::size_t i = 0;
  for (auto& e : store) {
    const auto& [name, tensor] = ck.params[i++];
    if (name != e.name || tensor.shape() != e.value.shape())
      throw DataError("checkpoint parameter " + name + " does not match model parameter " +
                      e.name);
    auto& dst = e.value.values();
    for (std::size_t k = 0; k < dst.size(); ++k)
      dst[k] = static_cast<S>(tensor.values()[k]);
  }
}

}  // namespace mvdepth
