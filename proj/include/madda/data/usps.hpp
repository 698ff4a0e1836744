#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "madda/data/dataset.hpp"
#include "madda/errors.hpp"

namespace madda::data {

inline constexpr std::size_t kUspsSide = 16;
inline constexpr std::size_t kUspsPixels = kUspsSide * kUspsSide;

// Bilinear resize with the half-pixel (align_corners = false) convention;
// source coordinates are clamped at the border.
inline std::vector<float> bilinear_resize(std::span<const float> src, std::size_t src_h, std::size_t src_w,
                                          std::size_t dst_h, std::size_t dst_w) {
  if (src.size() != src_h * src_w) throw ContractError("bilinear_resize: source size does not match shape");
  std::vector<float> out(dst_h * dst_w);
  const double scale_y = static_cast<double>(src_h) / static_cast<double>(dst_h);
  const double scale_x = static_cast<double>(src_w) / static_cast<double>(dst_w);
  for (std::size_t y = 0; y < dst_h; ++y) {
    const double sy = std::max(0.0, (static_cast<double>(y) + 0.5) * scale_y - 0.5);
    const std::size_t y0 = std::min(static_cast<std::size_t>(sy), src_h - 1);
    const std::size_t y1 = std::min(y0 + 1, src_h - 1);
    const double wy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < dst_w; ++x) {
      const double sx = std::max(0.0, (static_cast<double>(x) + 0.5) * scale_x - 0.5);
      const std::size_t x0 = std::min(static_cast<std::size_t>(sx), src_w - 1);
      const std::size_t x1 = std::min(x0 + 1, src_w - 1);
      const double wx = sx - static_cast<double>(x0);
      const double v = (1.0 - wy) * ((1.0 - wx) * src[y0 * src_w + x0] + wx * src[y0 * src_w + x1]) +
                       wy * ((1.0 - wx) * src[y1 * src_w + x0] + wx * src[y1 * src_w + x1]);
      out[y * dst_w + x] = static_cast<float>(v);
    }
  }
  return out;
}

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::vector<std::string_view> split_whitespace(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline bool parse_double(std::string_view text, double& out) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  const auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc() && res.ptr == text.data() + text.size();
}

// Integral label written either as "3" or "3.0000".
inline bool parse_label(std::string_view text, int& out) {
  double v = 0;
  if (!parse_double(text, v) || v != std::floor(v)) return false;
  out = static_cast<int>(v);
  return true;
}

}  // namespace detail

// One 16x16 USPS image in [0, 1] upsampled to the shared 28x28 input and
// mapped to [-1, 1].
inline std::vector<float> usps_to_model_input(std::span<const float> pixels01) {
  auto resized = bilinear_resize(pixels01, kUspsSide, kUspsSide, kImageSide, kImageSide);
  for (float& v : resized) v = 2.0f * v - 1.0f;
  return resized;
}

// Header-less CSV, one row per image: label,p0,...,p255 with p in [0, 1].
inline LabeledDataset load_usps(const std::filesystem::path& path, Split split = Split::train,
                                std::string domain = "usps") {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  LabeledDataset ds;
  ds.domain = std::move(domain);
  ds.split = split;
  std::vector<float> flat;
  std::string line;
  std::size_t row = 0;
  std::vector<float> pixels(kUspsPixels);
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_fields(line, ',');
    const std::string where = path.string() + " row " + std::to_string(row);
    if (fields.size() != kUspsPixels + 1)
      throw FormatError(where + ": expected 257 fields, found " + std::to_string(fields.size()));
    int label = 0;
    if (!detail::parse_label(fields[0], label)) throw FormatError(where + ": unparsable label");
    if (label < 0 || label >= kNumClasses)
      throw FormatError(where + ": label " + std::to_string(label) + " is outside 0..9");
    for (std::size_t j = 0; j < kUspsPixels; ++j) {
      double v = 0;
      if (!detail::parse_double(fields[j + 1], v)) throw FormatError(where + ": unparsable pixel " + std::to_string(j));
      if (!(v >= 0.0 && v <= 1.0)) throw FormatError(where + ": pixel " + std::to_string(j) + " outside [0, 1]");
      pixels[j] = static_cast<float>(v);
    }
    const auto img = usps_to_model_input(pixels);
    flat.insert(flat.end(), img.begin(), img.end());
    ds.labels.push_back(label);
  }
  if (in.bad()) throw IoError("error reading " + path.string());
  ds.images = Tensor(Shape{ds.labels.size(), 1, kImageSide, kImageSide}, std::move(flat));
  return ds;
}

struct UspsRecord {
  int label = 0;
  std::vector<float> pixels;  // 256 values in [0, 1]
};

inline void write_usps_csv(const std::filesystem::path& path, const std::vector<UspsRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  char buf[32];
  for (const auto& r : records) {
    out << r.label;
    for (float v : r.pixels) {
      std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(v));
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("error writing " + path.string());
}

// Source layouts accepted by the converter.
//   libsvm: "<label> <idx>:<value> ..." with labels 1..10 (digit + 1),
//           1-based feature indices, values in [-1, 1]; absent features are 0.
//   esl:    "<digit> v1 ... v256" whitespace separated, values in [-1, 1]
//           (the zip.train / zip.test layout).
enum class UspsSourceFormat { libsvm, esl };

inline std::vector<UspsRecord> read_usps_source(const std::filesystem::path& path, UspsSourceFormat format) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<UspsRecord> records;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    const auto tokens = detail::split_whitespace(line);
    if (tokens.empty()) continue;
    const std::string where = path.string() + " row " + std::to_string(row);
    UspsRecord rec;
    rec.pixels.assign(kUspsPixels, 0.5f);
    if (!detail::parse_label(tokens[0], rec.label)) throw FormatError(where + ": unparsable label");
    if (format == UspsSourceFormat::libsvm) {
      rec.label -= 1;
      for (std::size_t t = 1; t < tokens.size(); ++t) {
        const auto colon = tokens[t].find(':');
        double idx = 0, v = 0;
        if (colon == std::string_view::npos || !detail::parse_double(tokens[t].substr(0, colon), idx) ||
            !detail::parse_double(tokens[t].substr(colon + 1), v))
          throw FormatError(where + ": malformed feature '" + std::string(tokens[t]) + "'");
        if (idx < 1 || idx > static_cast<double>(kUspsPixels)) throw FormatError(where + ": feature index out of range");
        rec.pixels[static_cast<std::size_t>(idx) - 1] = static_cast<float>(std::clamp((v + 1.0) / 2.0, 0.0, 1.0));
      }
    } else {
      if (tokens.size() != kUspsPixels + 1)
        throw FormatError(where + ": expected 257 values, found " + std::to_string(tokens.size()));
      for (std::size_t j = 0; j < kUspsPixels; ++j) {
        double v = 0;
        if (!detail::parse_double(tokens[j + 1], v)) throw FormatError(where + ": unparsable value");
        rec.pixels[j] = static_cast<float>(std::clamp((v + 1.0) / 2.0, 0.0, 1.0));
      }
    }
    if (rec.label < 0 || rec.label >= kNumClasses)
      throw FormatError(where + ": label outside 0..9 after conversion");
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace madda::data
