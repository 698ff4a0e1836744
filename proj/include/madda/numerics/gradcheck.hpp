#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "madda/numerics/graph.hpp"

namespace madda::numerics {

struct GradCheckOptions {
  double step = 1e-3;
  double tolerance = 1e-3;
  // Denominator floor for the relative error; 0 gives a pure relative error.
  double abs_floor = 0.0;
  // Components whose +/- perturbation crosses a ReLU, hinge, pool or min
  // switch are non-differentiable there and are skipped.
  bool skip_kinks = true;
  // Also check placeholders created with requires_grad.
  bool include_inputs = true;
  // Check at most this many evenly spaced components per tensor; 0 = all.
  std::size_t max_components = 0;
};

struct TensorGradError {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

struct GradCheckReport {
  std::vector<TensorGradError> entries;
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_relative_error <= tolerance; }
  std::size_t skipped() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.skipped;
    return n;
  }
};

inline double relative_error(double analytic, double numeric, double abs_floor = 0.0) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
  if (denom == 0.0) return 0.0;
  return std::abs(analytic - numeric) / denom;
}

inline std::vector<std::size_t> sample_components(std::size_t n, std::size_t limit) {
  std::vector<std::size_t> out;
  if (limit == 0 || limit >= n) {
    for (std::size_t j = 0; j < n; ++j) out.push_back(j);
  } else {
    for (std::size_t t = 0; t < limit; ++t) out.push_back(t * n / limit + (n / limit) / 2);
  }
  return out;
}

// Compares backward() against central differences for every parameter (and
// differentiable placeholder) feeding `loss`. Leaves the graph evaluated at
// the original point.
template <typename T>
GradCheckReport check_gradient(BasicGraph<T>& graph, NodeId loss, const GradCheckOptions& options = {}) {
  GradCheckReport report;
  report.tolerance = options.tolerance;
  const auto params = graph.parameters();

  graph.forward();
  const std::uint64_t base_signature = graph.kink_signature();
  zero_grad(params);
  graph.backward(loss);

  const T h = static_cast<T>(options.step);
  auto assess = [&](TensorGradError& entry, std::size_t j, double analytic, auto&& set_value, T original) {
    set_value(static_cast<T>(original + h));
    graph.forward();
    const double plus = graph.scalar(loss);
    const std::uint64_t sig_plus = graph.kink_signature();
    set_value(static_cast<T>(original - h));
    graph.forward();
    const double minus = graph.scalar(loss);
    const std::uint64_t sig_minus = graph.kink_signature();
    set_value(original);
    if (options.skip_kinks && (sig_plus != base_signature || sig_minus != base_signature)) {
      ++entry.skipped;
      return;
    }
    const double numeric = (plus - minus) / (2.0 * static_cast<double>(h));
    const double err = relative_error(analytic, numeric, options.abs_floor);
    ++entry.checked;
    if (err > entry.max_relative_error) {
      entry.max_relative_error = err;
      entry.worst_index = j;
    }
  };

  for (auto* p : params) {
    TensorGradError entry{p->name};
    const BasicTensor<T> analytic = p->grad;
    for (std::size_t j : sample_components(p->value.size(), options.max_components)) {
      const T original = p->value[j];
      assess(entry, j, static_cast<double>(analytic[j]), [&](T v) { p->value[j] = v; }, original);
    }
    report.entries.push_back(entry);
  }

  if (options.include_inputs) {
    for (const auto& [name, id] : graph.differentiable_inputs()) {
      TensorGradError entry{name};
      const BasicTensor<T> analytic = graph.grad(id).empty() ? BasicTensor<T>(graph.value(id).shape())
                                                            : graph.grad(id);
      BasicTensor<T> point = graph.value(id);
      for (std::size_t j : sample_components(point.size(), options.max_components)) {
        const T original = point[j];
        auto set_value = [&, key = name](T v) {
          point[j] = v;
          graph.set_input(key, point);
        };
        assess(entry, j, static_cast<double>(analytic[j]), set_value, original);
      }
      graph.set_input(name, point);
      report.entries.push_back(entry);
    }
  }

  graph.forward();
  // Leave parameter grads as the analytic gradient at the original point.
  zero_grad(params);
  graph.backward(loss);

  for (const auto& e : report.entries)
    report.max_relative_error = std::max(report.max_relative_error, e.max_relative_error);
  return report;
}

}  // namespace madda::numerics
