#pragma once

#include <span>
#include <string>
#include <vector>

#include "madda/data/dataset.hpp"
#include "madda/errors.hpp"
#include "madda/numerics/tensor.hpp"

namespace madda::training {

// One centroid per class, row j belonging to class_labels[j].
struct ClusterCenters {
  Tensor centers;
  std::vector<int> class_labels;

  std::size_t size() const noexcept { return class_labels.size(); }
};

// Per-class means of `embeddings` (N, D), accumulated in double and rounded
// once. Every class 0..num_classes-1 must occur.
inline ClusterCenters compute_cluster_centers(const Tensor& embeddings, std::span<const int> labels,
                                              int num_classes = data::kNumClasses) {
  if (embeddings.rank() != 2 || embeddings.dim(0) != labels.size())
    throw ContractError("cluster centers: embeddings " + madda::to_string(embeddings.shape()) + " for " +
                        std::to_string(labels.size()) + " labels");
  const std::size_t dim = embeddings.dim(1);
  const std::size_t k = static_cast<std::size_t>(num_classes);
  std::vector<double> sums(k * dim, 0.0);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw ContractError("cluster centers: label " + std::to_string(labels[i]) + " outside 0.." +
                          std::to_string(num_classes - 1));
    const auto row = embeddings.row(i);
    double* s = sums.data() + static_cast<std::size_t>(labels[i]) * dim;
    for (std::size_t j = 0; j < dim; ++j) s[j] += static_cast<double>(row[j]);
    ++counts[static_cast<std::size_t>(labels[i])];
  }
  ClusterCenters out;
  out.centers = Tensor(Shape{k, dim});
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) throw ContractError("cluster centers: class " + std::to_string(c) + " has no examples");
    for (std::size_t j = 0; j < dim; ++j)
      out.centers[c * dim + j] = static_cast<float>(sums[c * dim + j] / static_cast<double>(counts[c]));
    out.class_labels.push_back(static_cast<int>(c));
  }
  return out;
}

}  // namespace madda::training
