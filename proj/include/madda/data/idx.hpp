#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "madda/data/dataset.hpp"
#include "madda/errors.hpp"

namespace madda::data {

inline constexpr std::uint32_t kIdxImageMagic = 2051;  // 0x00000803: unsigned byte, 3 dims
inline constexpr std::uint32_t kIdxLabelMagic = 2049;  // 0x00000801: unsigned byte, 1 dim

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading " + path.string());
  return bytes;
}

inline std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t offset) {
  return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) |
         (std::uint32_t{b[offset + 2]} << 8) | std::uint32_t{b[offset + 3]};
}

inline void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 24));
  b.push_back(static_cast<std::uint8_t>(v >> 16));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v));
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("error writing " + path.string());
}

}  // namespace detail

struct IdxImages {
  std::uint32_t count = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> pixels;
};

inline IdxImages read_idx_images(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  if (bytes.size() < 4) throw IoError(path.string() + ": truncated IDX header");
  const std::uint32_t magic = detail::read_be32(bytes, 0);
  if (magic != kIdxImageMagic)
    throw FormatError(path.string() + ": bad IDX image magic " + std::to_string(magic) + " (expected 2051)");
  if (bytes.size() < 16) throw IoError(path.string() + ": truncated IDX header");
  IdxImages out;
  out.count = detail::read_be32(bytes, 4);
  out.rows = detail::read_be32(bytes, 8);
  out.cols = detail::read_be32(bytes, 12);
  const std::uint64_t payload = std::uint64_t{out.count} * out.rows * out.cols;
  if (bytes.size() - 16 < payload)
    throw IoError(path.string() + ": truncated IDX payload, expected " + std::to_string(payload) +
                  " pixel bytes, found " + std::to_string(bytes.size() - 16));
  out.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(payload));
  return out;
}

inline std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  if (bytes.size() < 4) throw IoError(path.string() + ": truncated IDX header");
  const std::uint32_t magic = detail::read_be32(bytes, 0);
  if (magic != kIdxLabelMagic)
    throw FormatError(path.string() + ": bad IDX label magic " + std::to_string(magic) + " (expected 2049)");
  if (bytes.size() < 8) throw IoError(path.string() + ": truncated IDX header");
  const std::uint32_t count = detail::read_be32(bytes, 4);
  if (bytes.size() - 8 < count)
    throw IoError(path.string() + ": truncated IDX payload, expected " + std::to_string(count) +
                  " labels, found " + std::to_string(bytes.size() - 8));
  return {bytes.begin() + 8, bytes.begin() + 8 + count};
}

inline float byte_to_unit_range(std::uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }

inline LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                               std::string domain = "mnist", Split split = Split::train) {
  const IdxImages images = read_idx_images(images_path);
  const auto labels = read_idx_labels(labels_path);
  if (images.count != labels.size())
    throw ConsistencyError(images_path.string() + " holds " + std::to_string(images.count) + " images but " +
                           labels_path.string() + " holds " + std::to_string(labels.size()) + " labels");
  if (images.rows != kImageSide || images.cols != kImageSide)
    throw FormatError(images_path.string() + ": expected 28x28 images, found " + std::to_string(images.rows) +
                      "x" + std::to_string(images.cols));
  LabeledDataset ds;
  ds.domain = std::move(domain);
  ds.split = split;
  ds.images = Tensor(Shape{images.count, 1, kImageSide, kImageSide});
  for (std::size_t j = 0; j < images.pixels.size(); ++j) ds.images[j] = byte_to_unit_range(images.pixels[j]);
  ds.labels.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= kNumClasses)
      throw FormatError(labels_path.string() + ": label " + std::to_string(labels[i]) + " at index " +
                        std::to_string(i) + " is outside 0..9");
    ds.labels.push_back(labels[i]);
  }
  return ds;
}

inline void write_idx_images(const std::filesystem::path& path, const IdxImages& images) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(16 + images.pixels.size());
  detail::put_be32(bytes, kIdxImageMagic);
  detail::put_be32(bytes, images.count);
  detail::put_be32(bytes, images.rows);
  detail::put_be32(bytes, images.cols);
  bytes.insert(bytes.end(), images.pixels.begin(), images.pixels.end());
  detail::write_file(path, bytes);
}

inline void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(8 + labels.size());
  detail::put_be32(bytes, kIdxLabelMagic);
  detail::put_be32(bytes, static_cast<std::uint32_t>(labels.size()));
  bytes.insert(bytes.end(), labels.begin(), labels.end());
  detail::write_file(path, bytes);
}

}  // namespace madda::data
