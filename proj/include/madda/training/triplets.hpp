#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "madda/numerics/random.hpp"

namespace madda::training {

// Indices into a batch.
struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

// Every same-class pair (i < j) of each class present, classes ascending,
// becomes (anchor i, positive j) with one negative drawn uniformly from the
// examples of other classes. Empty when no pair or no second class exists.
inline std::vector<Triplet> mine_triplets(std::span<const int> labels, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::vector<Triplet> out;
  if (by_class.size() < 2) return out;
  Rng rng(seed);
  std::vector<std::size_t> others;
  for (const auto& [label, members] : by_class) {
    if (members.size() < 2) continue;
    others.clear();
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] != label) others.push_back(i);
    for (std::size_t a = 0; a < members.size(); ++a)
      for (std::size_t p = a + 1; p < members.size(); ++p)
        out.push_back({members[a], members[p], others[uniform_index(rng, others.size())]});
  }
  return out;
}

// sum over classes of c(c - 1) / 2
inline std::size_t triplet_count(std::span<const int> labels) {
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  if (counts.size() < 2) return 0;
  std::size_t n = 0;
  for (const auto& [l, c] : counts) n += c * (c - 1) / 2;
  return n;
}

}  // namespace madda::training
