#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "madda/errors.hpp"
#include "madda/models/networks.hpp"
#include "madda/numerics/optimizer.hpp"

namespace madda::models {

// On-disk layout (all integers little-endian u32):
//   "MADDACKPT" | version | tensor count |
//   per tensor: name length, UTF-8 name, rank, dims..., f32 payload |
//   metadata as UTF-8 "key=value\n" lines until end of file.
inline constexpr char kCheckpointMagic[] = "MADDACKPT";
inline constexpr std::size_t kCheckpointMagicSize = 9;
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::map<std::string, std::string> metadata;

  void put(std::string name, Tensor t) {
    for (auto& [n, v] : tensors)
      if (n == name) {
        v = std::move(t);
        return;
      }
    tensors.emplace_back(std::move(name), std::move(t));
  }
  bool has(const std::string& name) const {
    for (const auto& [n, v] : tensors)
      if (n == name) return true;
    return false;
  }
  const Tensor& get(const std::string& name) const {
    for (const auto& [n, v] : tensors)
      if (n == name) return v;
    throw FormatError("checkpoint has no tensor named '" + name + "'");
  }
  const std::string& meta(const std::string& key) const {
    auto it = metadata.find(key);
    if (it == metadata.end()) throw FormatError("checkpoint has no metadata key '" + key + "'");
    return it->second;
  }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  Reader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      throw IoError(source_ + ": truncated checkpoint (needed " + std::to_string(n) + " bytes at offset " +
                    std::to_string(pos_) + ")");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<unsigned char>(bytes_[pos_ + i])} << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string rest() {
    std::string s = bytes_.substr(pos_);
    pos_ = bytes_.size();
    return s;
  }

 private:
  const std::string& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out(kCheckpointMagic, kCheckpointMagicSize);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.data()) detail::put_f32(out, v);
  }
  for (const auto& [k, v] : ckpt.metadata) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
      throw ContractError("checkpoint metadata '" + k + "' contains '=' or a newline");
    out += k + "=" + v + "\n";
  }
  return out;
}

inline Checkpoint parse_checkpoint(const std::string& bytes, const std::string& source = "checkpoint") {
  detail::Reader r(bytes, source);
  if (bytes.size() < kCheckpointMagicSize || bytes.compare(0, kCheckpointMagicSize, kCheckpointMagic) != 0)
    throw FormatError(source + ": not a checkpoint (bad magic)");
  r.str(kCheckpointMagicSize);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError(source + ": checkpoint version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  Checkpoint ckpt;
  const std::uint32_t count = r.u32();
  for (std::uint32_t t = 0; t < count; ++t) {
    std::string name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.u32());
    const std::size_t n = shape_size(shape);
    r.need(n * 4);
    std::vector<float> data(n);
    for (auto& v : data) v = r.f32();
    ckpt.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  const std::string meta = r.rest();
  std::size_t start = 0;
  while (start < meta.size()) {
    std::size_t end = meta.find('\n', start);
    if (end == std::string::npos) throw IoError(source + ": truncated checkpoint metadata");
    const std::string line = meta.substr(start, end - start);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(source + ": malformed metadata line '" + line + "'");
    ckpt.metadata[line.substr(0, eq)] = line.substr(eq + 1);
    start = end + 1;
  }
  return ckpt;
}

// Written to a sibling temporary file and renamed into place.
inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("error writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading " + path.string());
  return parse_checkpoint(bytes, path.string());
}

// ---- parameter sets <-> checkpoints --------------------------------------

inline void store(Checkpoint& ckpt, const ParameterRefs<float>& params, const std::string& prefix = "") {
  for (const auto* p : params) ckpt.put(prefix + p->name, p->value);
}

inline void restore(const Checkpoint& ckpt, const ParameterRefs<float>& params, const std::string& prefix = "") {
  // Validate everything first so a bad file leaves the parameters untouched.
  for (const auto* p : params) {
    const Tensor& t = ckpt.get(prefix + p->name);
    if (t.shape() != p->value.shape())
      throw FormatError("checkpoint tensor '" + prefix + p->name + "' has shape " + madda::to_string(t.shape()) +
                        ", expected " + madda::to_string(p->value.shape()));
  }
  for (auto* p : params) {
    p->value = ckpt.get(prefix + p->name);
    p->zero_grad();
  }
}

inline void store(Checkpoint& ckpt, ModelBundle& bundle, const std::string& prefix = "") {
  store(ckpt, bundle.parameters(), prefix);
  ckpt.metadata[prefix + "role"] = to_string(bundle.role);
}

inline ModelBundle restore_bundle(const Checkpoint& ckpt, const std::string& prefix = "") {
  ModelBundle bundle = build_model(0);
  restore(ckpt, bundle.parameters(), prefix);
  const auto it = ckpt.metadata.find(prefix + "role");
  bundle.role = (it != ckpt.metadata.end() && it->second == "target") ? Role::target : Role::source;
  return bundle;
}

inline Discriminator restore_discriminator(const Checkpoint& ckpt, const std::string& prefix = "") {
  Discriminator d = build_discriminator(0);
  restore(ckpt, d.parameters(), prefix);
  return d;
}

inline void store(Checkpoint& ckpt, const numerics::Adam& opt, const std::string& prefix) {
  const auto& params = opt.parameters();
  const auto& st = opt.state();
  for (std::size_t k = 0; k < params.size(); ++k) {
    ckpt.put(prefix + ".m." + params[k]->name, st.first_moment[k]);
    ckpt.put(prefix + ".v." + params[k]->name, st.second_moment[k]);
  }
  ckpt.metadata[prefix + ".step"] = std::to_string(st.step);
}

inline void restore(const Checkpoint& ckpt, numerics::Adam& opt, const std::string& prefix) {
  numerics::AdamState st;
  st.step = std::stoull(ckpt.meta(prefix + ".step"));
  for (const auto* p : opt.parameters()) {
    st.first_moment.push_back(ckpt.get(prefix + ".m." + p->name));
    st.second_moment.push_back(ckpt.get(prefix + ".v." + p->name));
  }
  opt.restore(std::move(st));
}

}  // namespace madda::models
