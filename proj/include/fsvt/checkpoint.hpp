#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "fsvt/autograd.hpp"
#include "fsvt/config.hpp"
#include "fsvt/tensor.hpp"

namespace fsvt {

// Single-file checkpoint: "FSVT", version u32 LE, config blob length u32 LE,
// UTF-8 key=value blob, then records until EOF: name length u16, name,
// dtype u8 (1 = float32), rank u8, dims u32 x rank, little-endian data.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  static constexpr std::uint8_t kFloat32 = 1;

  KeyValues meta;
  std::map<std::string, Tensor<float>> tensors;

  const Tensor<float>& tensor(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw Error("checkpoint_mismatch", "checkpoint has no record '" + name + "'");
    return it->second;
  }
  bool has(const std::string& name) const { return tensors.count(name) > 0; }
};

namespace ckpt_detail {

template <class U>
void put(std::ostream& os, U v) {
  unsigned char b[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), sizeof(U));
}

template <class U>
U get(std::istream& is, const char* what) {
  unsigned char b[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(U)))
    throw Error("corrupt_checkpoint", std::string("checkpoint: truncated ") + what);
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
  return v;
}

}  // namespace ckpt_detail

inline void write_checkpoint(std::ostream& os, const Checkpoint& c) {
  using namespace ckpt_detail;
  os.write("FSVT", 4);
  put<std::uint32_t>(os, Checkpoint::kVersion);
  const std::string blob = c.meta.str();
  put<std::uint32_t>(os, static_cast<std::uint32_t>(blob.size()));
  os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  for (const auto& [name, t] : c.tensors) {
    require(name.size() < 65536, "io", "checkpoint: record name too long");
    put<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint8_t>(os, Checkpoint::kFloat32);
    put<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
    for (int d : t.shape().dims()) put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (float v : t.values()) {
      std::uint32_t u;
      std::memcpy(&u, &v, 4);
      put<std::uint32_t>(os, u);
    }
  }
}

inline Checkpoint read_checkpoint(std::istream& is) {
  using namespace ckpt_detail;
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "FSVT", 4) != 0) throw Error("corrupt_checkpoint", "checkpoint: bad magic");
  const auto version = get<std::uint32_t>(is, "version");
  require(version == Checkpoint::kVersion, "corrupt_checkpoint",
          "checkpoint: unsupported version " + std::to_string(version));
  const auto blob_len = get<std::uint32_t>(is, "blob length");
  std::string blob(blob_len, '\0');
  if (!is.read(blob.data(), blob_len)) throw Error("corrupt_checkpoint", "checkpoint: truncated config blob");
  Checkpoint c;
  c.meta = KeyValues::parse(blob);
  while (is.peek() != std::char_traits<char>::eof()) {
    const auto name_len = get<std::uint16_t>(is, "record name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw Error("corrupt_checkpoint", "checkpoint: truncated record name");
    const auto dtype = get<std::uint8_t>(is, "dtype");
    require(dtype == Checkpoint::kFloat32, "corrupt_checkpoint",
            "checkpoint: record '" + name + "' has unknown dtype");
    const auto rank = get<std::uint8_t>(is, "rank");
    require(rank >= 1 && rank <= 4, "corrupt_checkpoint", "checkpoint: record '" + name + "' has bad rank");
    std::vector<int> dims;
    for (int i = 0; i < rank; ++i) dims.push_back(static_cast<int>(get<std::uint32_t>(is, "dims")));
    Tensor<float> t(Shape::from(dims));
    for (auto& v : t.values()) {
      const auto u = get<std::uint32_t>(is, "data");
      std::memcpy(&v, &u, 4);
    }
    c.tensors.emplace(std::move(name), std::move(t));
  }
  return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  // Write-then-rename so an interrupted save never leaves a torn file.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw Error("io", "cannot open " + tmp + " for writing");
    write_checkpoint(os, c);
    if (!os) throw Error("io", "write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error("io", "cannot rename " + tmp + " to " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("missing_file", "cannot open checkpoint " + path);
  return read_checkpoint(is);
}

// Copies parameters of any module with for_each_param in/out of a checkpoint.
template <class Module>
void store_params(Module& m, Checkpoint& c, const std::string& prefix = "param/") {
  m.for_each_param("", [&](const std::string& name, Parameter<float>& p) { c.tensors[prefix + name] = p.value; });
}

template <class Module>
void restore_params(Module& m, const Checkpoint& c, const std::string& prefix = "param/") {
  m.for_each_param("", [&](const std::string& name, Parameter<float>& p) {
    const Tensor<float>& t = c.tensor(prefix + name);
    require(t.shape() == p.value.shape(), "checkpoint_mismatch",
            "record '" + name + "' has shape " + t.shape().str() + ", model expects " + p.value.shape().str());
    p.value = t;
    p.zero_grad();
  });
}

}  // namespace fsvt
