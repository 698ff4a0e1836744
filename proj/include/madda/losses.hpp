#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "madda/errors.hpp"
#include "madda/numerics/graph.hpp"

namespace madda::losses {

using numerics::BasicGraph;
using numerics::NodeId;

struct TripletConfig {
  double margin = 1.0;

  void validate() const {
    if (!(margin >= 0.0) || !std::isfinite(margin)) throw ContractError("triplet margin must be a finite value >= 0");
  }
};

// A scalar loss node plus its value at construction time, for logging.
template <typename T>
struct LossValue {
  NodeId node;
  T value{};
};

namespace detail {

template <typename T>
NodeId as_rows(BasicGraph<T>& g, NodeId x) {
  const auto& s = g.value(x).shape();
  if (s.size() == 1) return g.reshape(x, Shape{1, s[0]});
  if (s.size() != 2) throw ContractError("embeddings must be (D) or (T, D), got " + madda::to_string(s));
  return x;
}

template <typename T>
LossValue<T> finish(BasicGraph<T>& g, NodeId node) {
  return {node, g.scalar(node)};
}

}  // namespace detail

// sum_i max(|a_i - p_i|^2 - |a_i - n_i|^2 + margin, 0)
// Inactive triplets contribute zero value and zero gradient.
template <typename T>
LossValue<T> triplet_loss(BasicGraph<T>& g, NodeId anchors, NodeId positives, NodeId negatives, T margin) {
  if (!(margin >= T{0})) throw ContractError("triplet margin must be >= 0");
  const Shape& sa = g.value(anchors).shape();
  if (sa != g.value(positives).shape() || sa != g.value(negatives).shape())
    throw ContractError("triplet embeddings differ in shape: " + madda::to_string(sa) + ", " +
                        madda::to_string(g.value(positives).shape()) + ", " +
                        madda::to_string(g.value(negatives).shape()));
  const NodeId a = detail::as_rows(g, anchors);
  const NodeId p = detail::as_rows(g, positives);
  const NodeId n = detail::as_rows(g, negatives);
  const NodeId gap = g.sub(g.row_sq_dist(a, p), g.row_sq_dist(a, n));
  return detail::finish(g, g.sum(g.relu(g.add_scalar(gap, margin))));
}

// Discriminator objective on logits s (source features) and t (target
// features): -sum log sigmoid(s) - sum log(1 - sigmoid(t)).
template <typename T>
LossValue<T> discriminator_loss(BasicGraph<T>& g, NodeId source_logits, NodeId target_logits) {
  const NodeId src = g.neg(g.sum(g.log_sigmoid(source_logits)));
  const NodeId tgt = g.neg(g.sum(g.log_sigmoid(g.neg(target_logits))));
  return detail::finish(g, g.add(src, tgt));
}

// Inverted-label encoder objective: -sum log sigmoid(t).
template <typename T>
LossValue<T> generator_loss(BasicGraph<T>& g, NodeId target_logits) {
  return detail::finish(g, g.neg(g.sum(g.log_sigmoid(target_logits))));
}

// sum_i min_j |e_i - c_j|^2. The gradient follows the first nearest center.
template <typename T>
LossValue<T> center_magnet_loss(BasicGraph<T>& g, NodeId embeddings, NodeId centers) {
  const auto& c = g.value(centers);
  if (c.rank() != 2 || c.dim(0) == 0) throw ContractError("center magnet loss needs at least one center");
  const NodeId e = detail::as_rows(g, embeddings);
  if (g.value(e).dim(1) != c.dim(1))
    throw ContractError("embedding dimension " + std::to_string(g.value(e).dim(1)) +
                        " does not match center dimension " + std::to_string(c.dim(1)));
  return detail::finish(g, g.sum(g.row_min(g.sq_dist_matrix(e, centers))));
}

// ---- probability-domain forms (logging and reference checks) ------------

inline constexpr double kProbabilityClamp = 1e-7;

inline double clamp_probability(double p) {
  if (std::isnan(p) || p < 0.0 || p > 1.0)
    throw NumericError("discriminator output " + std::to_string(p) + " is not a probability");
  return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
}

inline double discriminator_loss_from_probabilities(std::span<const double> d_source,
                                                    std::span<const double> d_target) {
  double loss = 0.0;
  for (double p : d_source) loss -= std::log(clamp_probability(p));
  for (double p : d_target) loss -= std::log(1.0 - clamp_probability(p));
  return loss;
}

inline double generator_loss_from_probabilities(std::span<const double> d_target) {
  double loss = 0.0;
  for (double p : d_target) loss -= std::log(clamp_probability(p));
  return loss;
}

}  // namespace madda::losses
