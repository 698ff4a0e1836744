#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "madda/data/dataset.hpp"
#include "madda/errors.hpp"
#include "madda/data/usps.hpp"
#include "madda/inference/embed.hpp"

namespace madda::inference {

struct Prediction {
  std::vector<int> labels;
  std::size_t k = 0;
  // Row-major (N, k): reference indices and Euclidean distances, nearest first.
  std::vector<std::size_t> neighbors;
  std::vector<double> distances;

  std::size_t size() const noexcept { return labels.size(); }
};

// Squared Euclidean distance accumulated in double.
inline double squared_distance(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = static_cast<double>(a[j]) - static_cast<double>(b[j]);
    s += d * d;
  }
  return s;
}

// Mode label of the k nearest references. Distance ties at the k-th place go
// to the lower reference index; label-count ties go to the smaller summed
// distance, then the smaller label.
inline Prediction knn_predict(const EmbeddingSet& query, const EmbeddingSet& reference, std::size_t k) {
  query.validate();
  reference.validate();
  if (k < 1 || k > reference.size())
    throw ContractError("k = " + std::to_string(k) + " is outside 1.." + std::to_string(reference.size()));
  if (query.dim() != reference.dim())
    throw ContractError("query dimension " + std::to_string(query.dim()) + " differs from reference dimension " +
                        std::to_string(reference.dim()));
  for (int l : reference.labels)
    if (l < 0 || l >= data::kNumClasses) throw ContractError("reference labels must be known classes 0..9");

  Prediction out;
  out.k = k;
  out.labels.resize(query.size());
  out.neighbors.resize(query.size() * k);
  out.distances.resize(query.size() * k);
  std::vector<std::pair<double, std::size_t>> cand(reference.size());
  for (std::size_t q = 0; q < query.size(); ++q) {
    const auto qrow = query.embeddings.row(q);
    for (std::size_t r = 0; r < reference.size(); ++r)
      cand[r] = {squared_distance(qrow, reference.embeddings.row(r)), r};
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());

    std::array<int, data::kNumClasses> count{};
    std::array<double, data::kNumClasses> dist_sum{};
    for (std::size_t j = 0; j < k; ++j) {
      const double d = std::sqrt(cand[j].first);
      const int label = reference.labels[cand[j].second];
      out.neighbors[q * k + j] = cand[j].second;
      out.distances[q * k + j] = d;
      ++count[label];
      dist_sum[label] += d;
    }
    int best = -1;
    for (int c = 0; c < data::kNumClasses; ++c) {
      if (count[c] == 0) continue;
      if (best < 0 || count[c] > count[best] || (count[c] == count[best] && dist_sum[c] < dist_sum[best])) best = c;
    }
    out.labels[q] = best;
  }
  return out;
}

inline double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size())
    throw ContractError("accuracy: " + std::to_string(predicted.size()) + " predictions for " +
                        std::to_string(truth.size()) + " labels");
  if (predicted.empty()) throw ContractError("accuracy of an empty prediction set is undefined");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

inline double accuracy(const Prediction& pred, std::span<const int> truth) { return accuracy(pred.labels, truth); }

// counts[truth][predicted]
using ConfusionMatrix = std::array<std::array<std::size_t, data::kNumClasses>, data::kNumClasses>;

inline ConfusionMatrix confusion_matrix(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw ContractError("confusion matrix: length mismatch");
  ConfusionMatrix m{};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= data::kNumClasses || predicted[i] < 0 || predicted[i] >= data::kNumClasses)
      throw ContractError("confusion matrix: label outside 0..9");
    ++m[truth[i]][predicted[i]];
  }
  return m;
}

// ---- CSV export -----------------------------------------------------------

struct CenterRows {
  Tensor centers;
  std::vector<int> labels;
};

// Header `domain,label,e0,...`; one row per embedding, then the centers
// under domain "center". Values carry 9 significant digits.
inline void export_embeddings(std::span<const EmbeddingSet> sets, const std::optional<CenterRows>& centers,
                              const std::filesystem::path& path) {
  std::size_t dim = centers ? centers->centers.dim(1) : models::kEmbeddingDim;
  for (const auto& set : sets) {
    set.validate();
    if (set.size()) dim = set.dim();
  }
  for (const auto& set : sets)
    if (set.size() && set.dim() != dim) throw ContractError("embedding sets differ in dimension");
  if (centers && centers->centers.dim(1) != dim) throw ContractError("center dimension differs from embeddings");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "domain,label";
  for (std::size_t j = 0; j < dim; ++j) out << ",e" << j;
  out << '\n';
  char buf[32];
  auto row = [&](const std::string& domain, int label, std::span<const float> values) {
    out << domain << ',' << label;
    for (float v : values) {
      std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(v));
      out << buf;
    }
    out << '\n';
  };
  for (const auto& set : sets)
    for (std::size_t i = 0; i < set.size(); ++i) row(set.domain, set.labels[i], set.embeddings.row(i));
  if (centers)
    for (std::size_t j = 0; j < centers->labels.size(); ++j) row("center", centers->labels[j], centers->centers.row(j));
  if (!out) throw IoError("error writing " + path.string());
}

inline void export_embeddings(const EmbeddingSet& set, const std::optional<CenterRows>& centers,
                              const std::filesystem::path& path) {
  export_embeddings(std::span<const EmbeddingSet>(&set, 1), centers, path);
}

struct EmbeddingRow {
  std::string domain;
  int label = 0;
  std::vector<float> values;
};

inline std::vector<EmbeddingRow> read_embeddings_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("domain,label", 0) != 0)
    throw FormatError(path.string() + ": missing embedding CSV header");
  std::vector<EmbeddingRow> rows;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto fields = data::detail::split_fields(line, ',');
    if (fields.size() < 2) throw FormatError(path.string() + " row " + std::to_string(n) + ": too few fields");
    EmbeddingRow r;
    r.domain = std::string(fields[0]);
    if (!data::detail::parse_label(fields[1], r.label))
      throw FormatError(path.string() + " row " + std::to_string(n) + ": bad label");
    for (std::size_t j = 2; j < fields.size(); ++j) {
      double v = 0;
      if (!data::detail::parse_double(fields[j], v))
        throw FormatError(path.string() + " row " + std::to_string(n) + ": bad value");
      r.values.push_back(static_cast<float>(v));
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace madda::inference
