#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "madda/data/dataset.hpp"
#include "madda/numerics/random.hpp"

namespace madda::data {

// Seven-segment digits rendered at 28x28, for running the pipeline without
// the real datasets. Two styles give two domains with a visible shift.
struct SyntheticStyle {
  double stroke = 1.6;   // half-width in pixels
  double scale = 1.0;    // glyph size relative to the canvas
  double offset_x = 0.0;
  double offset_y = 0.0;
  double slant = 0.0;    // x shear per unit of y
  double jitter = 1.5;   // max random translation in pixels
  double noise = 0.05;   // pixel noise std (in [0, 1] units)
  double ink = 1.0;
};

inline SyntheticStyle synthetic_style(const std::string& name) {
  if (name == "thin") return {};
  if (name == "bold") return {2.6, 0.82, 1.0, -0.5, 0.22, 1.5, 0.08, 0.9};
  throw ContractError("unknown synthetic style '" + name + "' (expected thin or bold)");
}

namespace detail {

// Segments a..g of a seven-segment display.
inline constexpr std::array<std::uint8_t, 10> kSegments = {
    0b0111111, 0b0000110, 0b1011011, 0b1001111, 0b1100110,
    0b1101101, 0b1111101, 0b0000111, 0b1111111, 0b1101111,
};

inline double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double t = std::clamp(((px - ax) * dx + (py - ay) * dy) / (dx * dx + dy * dy), 0.0, 1.0);
  const double qx = ax + t * dx - px, qy = ay + t * dy - py;
  return std::sqrt(qx * qx + qy * qy);
}

}  // namespace detail

inline LabeledDataset make_synthetic_digits(std::size_t n, const SyntheticStyle& style, std::uint64_t seed,
                                            std::string domain = "synthetic", Split split = Split::train) {
  // Segment endpoints in glyph units: x in [-1, 1], y in [-2, 2] (down is +y).
  struct Seg {
    double ax, ay, bx, by;
  };
  const std::array<Seg, 7> segs = {{
      {-1, -2, 1, -2},  // a
      {1, -2, 1, 0},    // b
      {1, 0, 1, 2},     // c
      {-1, 2, 1, 2},    // d
      {-1, 0, -1, 2},   // e
      {-1, -2, -1, 0},  // f
      {-1, 0, 1, 0},    // g
  }};
  Rng rng(derive_seed(seed, "synthetic", split == Split::train ? 0 : 1));
  LabeledDataset ds;
  ds.domain = std::move(domain);
  ds.split = split;
  ds.images = Tensor(Shape{n, 1, kImageSide, kImageSide});
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % kNumClasses);
    const double unit = 4.5 * style.scale * (0.9 + 0.2 * uniform_unit(rng));
    const double cx = 13.5 + style.offset_x + uniform_real(rng, -style.jitter, style.jitter);
    const double cy = 13.5 + style.offset_y + uniform_real(rng, -style.jitter, style.jitter);
    const double stroke = style.stroke * (0.85 + 0.3 * uniform_unit(rng));
    auto img = ds.images.row(i);
    for (std::size_t y = 0; y < kImageSide; ++y)
      for (std::size_t x = 0; x < kImageSide; ++x) {
        // back to glyph units, undoing the shear
        const double gy = (static_cast<double>(y) - cy) / unit;
        const double gx = (static_cast<double>(x) - cx) / unit - style.slant * gy;
        double d = 1e9;
        for (int s = 0; s < 7; ++s)
          if (detail::kSegments[label] >> s & 1)
            d = std::min(d, detail::segment_distance(gx, gy, segs[s].ax, segs[s].ay, segs[s].bx, segs[s].by));
        const double ink = style.ink * std::clamp(stroke - d * unit + 0.5, 0.0, 1.0);
        const double v = std::clamp(ink + style.noise * standard_normal(rng), 0.0, 1.0);
        img[y * kImageSide + x] = static_cast<float>(2.0 * v - 1.0);
      }
    ds.labels.push_back(label);
  }
  // labels cycle 0..9; shuffle so batches are not ordered by class
  auto perm = random_permutation(n, rng);
  return select(ds, perm);
}

}  // namespace madda::data
