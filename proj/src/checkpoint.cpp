#include "drsan/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <vector>

namespace drsan {

std::uint32_t crc32(const std::uint8_t* data, std::size_t len) {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xffffffffu;
  for (std::size_t i = 0; i < len; ++i)
    crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return crc ^ 0xffffffffu;
}

namespace {

constexpr std::uint8_t kDtypeF64 = 0;
constexpr std::uint8_t kDtypeF32 = 1;
constexpr std::uint8_t kBuildDtype = sizeof(real) == 8 ? kDtypeF64 : kDtypeF32;

template <class T>
void put(std::vector<std::uint8_t>& buf, T v) {
  // this project targets little-endian hosts; the format is little-endian
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  buf.insert(buf.end(), p, p + sizeof(T));
}

template <class T>
T get(const std::vector<std::uint8_t>& buf, std::size_t& off) {
  if (off + sizeof(T) > buf.size())
    throw CheckpointError("checkpoint: truncated file");
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::vector<std::uint8_t> buf;
  buf.insert(buf.end(), {'D', 'R', 'S', 'N'});
  put<std::uint16_t>(buf, kCheckpointVersion);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& [name, t] : params.tensors) {
    put<std::uint16_t>(buf, static_cast<std::uint16_t>(name.size()));
    buf.insert(buf.end(), name.begin(), name.end());
    put<std::uint8_t>(buf, kBuildDtype);
    put<std::uint8_t>(buf, static_cast<std::uint8_t>(t.rank()));
    for (int a = 0; a < t.rank(); ++a)
      put<std::uint32_t>(buf, static_cast<std::uint32_t>(t.dim(a)));
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.data());
    buf.insert(buf.end(), p, p + t.numel() * sizeof(real));
  }
  put<std::uint32_t>(buf, crc32(buf.data(), buf.size()));

  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("save_checkpoint: cannot open " + path);
  f.write(reinterpret_cast<const char*>(buf.data()),
          static_cast<std::streamsize>(buf.size()));
  if (!f) throw CheckpointError("save_checkpoint: short write to " + path);
}

ModelParams load_checkpoint(const std::string& path, const ModelConfig& cfg) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("load_checkpoint: cannot open " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());
  if (buf.size() < 14) throw CheckpointError("checkpoint: truncated file");

  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, buf.data() + buf.size() - 4, 4);
  const std::uint32_t actual = crc32(buf.data(), buf.size() - 4);
  if (stored_crc != actual)
    throw CheckpointError("checkpoint: CRC mismatch, file is corrupt (stored " +
                          std::to_string(stored_crc) + ", computed " +
                          std::to_string(actual) + ")");

  std::size_t off = 0;
  if (std::memcmp(buf.data(), "DRSN", 4) != 0)
    throw CheckpointError("checkpoint: bad magic, not a model checkpoint");
  off = 4;
  const auto version = get<std::uint16_t>(buf, off);
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint: format version " +
                          std::to_string(version) +
                          " is not supported; this build reads version " +
                          std::to_string(kCheckpointVersion) +
                          " — re-save the model with a matching build");
  const auto count = get<std::uint32_t>(buf, off);

  ModelParams params = make_params(cfg);
  std::size_t matched = 0;
  const std::size_t payload_end = buf.size() - 4;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint16_t>(buf, off);
    if (off + name_len > payload_end)
      throw CheckpointError("checkpoint: truncated file");
    std::string name(reinterpret_cast<const char*>(buf.data() + off), name_len);
    off += name_len;
    const auto dtype = get<std::uint8_t>(buf, off);
    const auto rank = get<std::uint8_t>(buf, off);
    Shape shape(rank);
    std::int64_t numel = 1;
    for (int a = 0; a < rank; ++a) {
      shape[static_cast<size_t>(a)] = static_cast<int>(get<std::uint32_t>(buf, off));
      numel *= shape[static_cast<size_t>(a)];
    }
    const std::size_t elem_size = dtype == kDtypeF64 ? 8 : 4;
    if (dtype != kDtypeF64 && dtype != kDtypeF32)
      throw CheckpointError("checkpoint: unknown dtype code " +
                            std::to_string(dtype) + " for array '" + name + "'");
    if (off + static_cast<std::size_t>(numel) * elem_size > payload_end)
      throw CheckpointError("checkpoint: truncated file");

    auto it = params.tensors.find(name);
    if (it == params.tensors.end())
      throw CheckpointError("checkpoint: unknown array '" + name +
                            "' is not part of this model's inventory");
    if (dtype != kBuildDtype)
      throw CheckpointError("checkpoint: array '" + name +
                            "' stored as dtype code " + std::to_string(dtype) +
                            ", this build expects " + std::to_string(kBuildDtype));
    if (it->second.shape() != shape)
      throw CheckpointError("checkpoint: array '" + name + "' has shape " +
                            shape_str(shape) + ", expected " +
                            shape_str(it->second.shape()));
    std::memcpy(it->second.data(), buf.data() + off,
                static_cast<std::size_t>(numel) * elem_size);
    off += static_cast<std::size_t>(numel) * elem_size;
    ++matched;
  }
  if (off != payload_end)
    throw CheckpointError("checkpoint: trailing bytes after last array");
  if (matched != params.tensors.size()) {
    for (const auto& [name, t] : params.tensors) {
      bool found = false;
      // re-scan the buffer names for the missing-array message
      std::size_t scan = 10;
      for (std::uint32_t i = 0; i < count && scan < payload_end; ++i) {
        const auto name_len = get<std::uint16_t>(buf, scan);
        std::string nm(reinterpret_cast<const char*>(buf.data() + scan), name_len);
        scan += name_len;
        const auto dtype = get<std::uint8_t>(buf, scan);
        const auto rank = get<std::uint8_t>(buf, scan);
        std::int64_t numel = 1;
        for (int a = 0; a < rank; ++a)
          numel *= static_cast<int>(get<std::uint32_t>(buf, scan));
        scan += static_cast<std::size_t>(numel) * (dtype == kDtypeF64 ? 8 : 4);
        if (nm == name) { found = true; break; }
      }
      if (!found)
        throw CheckpointError("checkpoint: missing array '" + name + "'");
    }
  }
  return params;
}

}  // namespace drsan
