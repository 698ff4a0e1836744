#pragma once

#include <algorithm>
#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "madda/errors.hpp"
#include "madda/numerics/random.hpp"
#include "madda/numerics/tensor.hpp"

namespace madda::data {

inline constexpr std::size_t kImageSide = 28;
inline constexpr std::size_t kImagePixels = kImageSide * kImageSide;
inline constexpr int kNumClasses = 10;

enum class Split { train, test };

inline std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

// One domain's images, shape (N, 1, 28, 28) with pixels in [-1, 1], and
// their digit labels.
struct LabeledDataset {
  Tensor images{Shape{0, 1, kImageSide, kImageSide}};
  std::vector<int> labels;
  std::string domain;
  Split split = Split::train;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }
  std::span<const float> image(std::size_t i) const { return images.row(i); }

  // Throws ConsistencyError / FormatError when an invariant does not hold.
  void validate() const {
    if (images.shape() != Shape{labels.size(), 1, kImageSide, kImageSide})
      throw ConsistencyError("dataset '" + domain + "' has image shape " + madda::to_string(images.shape()) +
                             " for " + std::to_string(labels.size()) + " labels");
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] < 0 || labels[i] >= kNumClasses)
        throw FormatError("dataset '" + domain + "' label " + std::to_string(labels[i]) + " at index " +
                          std::to_string(i) + " is outside 0..9");
    for (float v : images.data())
      if (!(v >= -1.0f && v <= 1.0f))
        throw FormatError("dataset '" + domain + "' has a pixel outside [-1, 1]");
  }

  std::set<int> classes() const { return {labels.begin(), labels.end()}; }
};

struct Batch {
  Tensor images;
  std::vector<int> labels;
  // Positions in the parent dataset, unique within the batch.
  std::vector<std::size_t> indices;

  std::size_t size() const noexcept { return labels.size(); }
};

inline LabeledDataset select(const LabeledDataset& ds, std::span<const std::size_t> indices) {
  LabeledDataset out;
  out.domain = ds.domain;
  out.split = ds.split;
  out.images = Tensor(Shape{indices.size(), 1, kImageSide, kImageSide});
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= ds.size()) throw ContractError("index out of range in select");
    const auto src = ds.image(indices[r]);
    std::copy(src.begin(), src.end(), out.images.row(r).begin());
    out.labels.push_back(ds.labels[indices[r]]);
  }
  return out;
}

inline Batch make_batch(const LabeledDataset& ds, std::vector<std::size_t> indices) {
  Batch b;
  LabeledDataset sel = select(ds, indices);
  b.images = std::move(sel.images);
  b.labels = std::move(sel.labels);
  b.indices = std::move(indices);
  return b;
}

// Uniform sample of n examples without replacement; deterministic in seed.
inline LabeledDataset subsample(const LabeledDataset& ds, std::size_t n, std::uint64_t seed) {
  if (n > ds.size())
    throw ContractError("cannot subsample " + std::to_string(n) + " examples from a dataset of " +
                        std::to_string(ds.size()));
  Rng rng(derive_seed(seed, "subsample"));
  auto perm = random_permutation(ds.size(), rng);
  perm.resize(n);
  return select(ds, perm);
}

// Partition of 0..n-1 into shuffled batches for one epoch; the last batch
// may be smaller. Order depends only on (seed, epoch).
inline std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                           std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size == 0) throw ContractError("batch size must be at least 1");
  if (n == 0) throw ContractError("cannot batch an empty dataset");
  Rng rng(derive_seed(seed, "batches", epoch));
  const auto perm = random_permutation(n, rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                     perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

inline std::vector<Batch> batches(const LabeledDataset& ds, std::size_t batch_size, std::uint64_t shuffle_seed,
                                  std::uint64_t epoch = 0) {
  std::vector<Batch> out;
  for (auto& idx : batch_indices(ds.size(), batch_size, shuffle_seed, epoch))
    out.push_back(make_batch(ds, std::move(idx)));
  return out;
}

}  // namespace madda::data
