#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "madda/errors.hpp"
#include "madda/numerics/gemm.hpp"
#include "madda/numerics/tensor.hpp"

namespace madda::numerics {

enum class OpKind {
  input,
  constant,
  parameter,
  conv2d,
  max_pool2x2,
  affine,
  reshape,
  relu,
  sigmoid,
  log_sigmoid,
  log,
  neg,
  add,
  sub,
  mul,
  add_scalar,
  scale,
  gather_rows,
  row_sq_dist,
  sq_dist_matrix,
  row_min,
  sum,
  mean,
};

constexpr std::string_view op_name(OpKind k) {
  switch (k) {
    case OpKind::input: return "input";
    case OpKind::constant: return "constant";
    case OpKind::parameter: return "parameter";
    case OpKind::conv2d: return "conv2d";
    case OpKind::max_pool2x2: return "max_pool2x2";
    case OpKind::affine: return "affine";
    case OpKind::reshape: return "reshape";
    case OpKind::relu: return "relu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::log_sigmoid: return "log_sigmoid";
    case OpKind::log: return "log";
    case OpKind::neg: return "neg";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::add_scalar: return "add_scalar";
    case OpKind::scale: return "scale";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::row_sq_dist: return "row_sq_dist";
    case OpKind::sq_dist_matrix: return "sq_dist_matrix";
    case OpKind::row_min: return "row_min";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
  }
  return "unknown";
}

struct NodeId {
  std::size_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

template <typename T>
T sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

// log(sigmoid(x)) without overflow for large |x|.
template <typename T>
T log_sigmoid(T x) {
  return std::min(x, T{0}) - std::log1p(std::exp(-std::abs(x)));
}

// Define-by-run tape. Every builder call evaluates its node immediately and
// appends it, so the node list is always in topological order. forward()
// replays the whole tape, which lets callers swap placeholder values or
// perturb parameters and re-evaluate without rebuilding.
template <typename T>
class BasicGraph {
 public:
  using TensorT = BasicTensor<T>;
  using ParameterT = BasicParameter<T>;

  struct Options {
    // Raise NumericError as soon as any node produces NaN or Inf.
    bool checked = true;
  };

  BasicGraph() = default;
  explicit BasicGraph(Options options) : options_(options) {}

  // Graphs hold raw pointers to parameters; moving is fine, copying is not.
  BasicGraph(const BasicGraph&) = delete;
  BasicGraph& operator=(const BasicGraph&) = delete;
  BasicGraph(BasicGraph&&) noexcept = default;
  BasicGraph& operator=(BasicGraph&&) noexcept = default;

  NodeId input(std::string name, TensorT value, bool requires_grad = false) {
    Node n(OpKind::input);
    n.label = std::move(name);
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    return push(std::move(n));
  }

  NodeId constant(TensorT value) {
    Node n(OpKind::constant);
    n.value = std::move(value);
    return push(std::move(n));
  }

  // Reads p.value on every evaluation and accumulates into p.grad on backward.
  NodeId param(ParameterT& p) {
    Node n(OpKind::parameter);
    n.label = p.name;
    n.param = &p;
    n.requires_grad = true;
    return push(std::move(n));
  }

  // Snapshot of a parameter that takes no part in differentiation.
  NodeId frozen(const ParameterT& p) { return constant(p.value); }

  // Valid (no padding), stride-1 cross-correlation.
  // x: (B, C, H, W), weight: (O, C, KH, KW), bias: (O) -> (B, O, H-KH+1, W-KW+1)
  NodeId conv2d(NodeId x, NodeId weight, NodeId bias) { return op(OpKind::conv2d, {x, weight, bias}); }
  // 2x2 window, stride 2; odd trailing rows/columns are dropped.
  NodeId max_pool2x2(NodeId x) { return op(OpKind::max_pool2x2, {x}); }
  // x: (B, in), weight: (out, in), bias: (out) -> (B, out)
  NodeId affine(NodeId x, NodeId weight, NodeId bias) { return op(OpKind::affine, {x, weight, bias}); }
  NodeId reshape(NodeId x, Shape shape) {
    Node n(OpKind::reshape);
    n.inputs = {x};
    n.shape_attr = std::move(shape);
    return push(std::move(n));
  }
  // (B, ...) -> (B, rest)
  NodeId flatten(NodeId x) {
    const auto& s = value(x).shape();
    const std::size_t b = s.empty() ? 1 : s[0];
    const std::size_t total = value(x).size();
    return reshape(x, Shape{b, b == 0 ? 0 : total / b});
  }
  NodeId relu(NodeId x) { return op(OpKind::relu, {x}); }
  NodeId sigmoid(NodeId x) { return op(OpKind::sigmoid, {x}); }
  NodeId log_sigmoid(NodeId x) { return op(OpKind::log_sigmoid, {x}); }
  NodeId log(NodeId x) { return op(OpKind::log, {x}); }
  NodeId neg(NodeId x) { return op(OpKind::neg, {x}); }
  NodeId add(NodeId a, NodeId b) { return op(OpKind::add, {a, b}); }
  NodeId sub(NodeId a, NodeId b) { return op(OpKind::sub, {a, b}); }
  NodeId mul(NodeId a, NodeId b) { return op(OpKind::mul, {a, b}); }
  NodeId add_scalar(NodeId x, T c) {
    Node n(OpKind::add_scalar);
    n.inputs = {x};
    n.scalar_attr = c;
    return push(std::move(n));
  }
  NodeId scale(NodeId x, T c) {
    Node n(OpKind::scale);
    n.inputs = {x};
    n.scalar_attr = c;
    return push(std::move(n));
  }
  // Rows of x (leading dimension) selected by index, repeats allowed.
  NodeId gather_rows(NodeId x, std::vector<std::size_t> rows) {
    Node n(OpKind::gather_rows);
    n.inputs = {x};
    n.index_attr = std::move(rows);
    return push(std::move(n));
  }
  // a, b: (T, D) -> (T) with out[t] = |a[t] - b[t]|^2
  NodeId row_sq_dist(NodeId a, NodeId b) { return op(OpKind::row_sq_dist, {a, b}); }
  // x: (B, D), c: (K, D) -> (B, K) with out[i][j] = |x[i] - c[j]|^2
  NodeId sq_dist_matrix(NodeId x, NodeId c) { return op(OpKind::sq_dist_matrix, {x, c}); }
  // (B, K) -> (B); the gradient flows only to the first minimal entry of each row.
  NodeId row_min(NodeId x) { return op(OpKind::row_min, {x}); }
  NodeId sum(NodeId x) { return op(OpKind::sum, {x}); }
  NodeId mean(NodeId x) { return op(OpKind::mean, {x}); }

  // Replaces a placeholder's value without re-evaluating.
  void set_input(const std::string& name, TensorT value) {
    auto it = std::find_if(nodes_.begin(), nodes_.end(),
                           [&](const Node& n) { return n.kind == OpKind::input && n.label == name; });
    if (it == nodes_.end()) throw ContractError("graph has no input named '" + name + "'");
    it->value = std::move(value);
  }

  // Replays the tape with new placeholder values; names must match inputs.
  void forward(const std::map<std::string, TensorT>& inputs) {
    for (const auto& [name, tensor] : inputs) set_input(name, tensor);
    forward();
  }

  void forward() {
    for (std::size_t i = 0; i < nodes_.size(); ++i) evaluate(i);
  }

  // Accumulates d(loss)/d(param) into every parameter's grad buffer.
  // Callers zero the buffers between steps.
  void backward(NodeId loss) {
    check_id(loss);
    if (value(loss).size() != 1) {
      throw ContractError("backward requires a scalar loss; node #" + std::to_string(loss.index) +
                          " has shape " + madda::to_string(value(loss).shape()));
    }
    for (auto& n : nodes_) n.grad = TensorT();
    Node& root = nodes_[loss.index];
    root.grad = TensorT(root.value.shape(), T{1});
    for (std::size_t i = loss.index + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      propagate(i);
    }
  }

  const TensorT& value(NodeId id) const {
    check_id(id);
    return nodes_[id.index].value;
  }
  // Gradient w.r.t. a node after backward(); empty if it received none.
  const TensorT& grad(NodeId id) const {
    check_id(id);
    return nodes_[id.index].grad;
  }
  T scalar(NodeId id) const {
    const auto& v = value(id);
    if (v.size() != 1) throw ContractError("node is not a scalar");
    return v[0];
  }
  OpKind kind(NodeId id) const {
    check_id(id);
    return nodes_[id.index].kind;
  }
  const std::vector<NodeId>& inputs_of(NodeId id) const {
    check_id(id);
    return nodes_[id.index].inputs;
  }
  std::size_t size() const noexcept { return nodes_.size(); }
  const Options& options() const noexcept { return options_; }

  // Placeholders created with requires_grad, in creation order.
  std::vector<std::pair<std::string, NodeId>> differentiable_inputs() const {
    std::vector<std::pair<std::string, NodeId>> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].kind == OpKind::input && nodes_[i].requires_grad) out.emplace_back(nodes_[i].label, NodeId{i});
    return out;
  }

  ParameterRefs<T> parameters() const {
    ParameterRefs<T> out;
    for (const auto& n : nodes_)
      if (n.kind == OpKind::parameter && std::find(out.begin(), out.end(), n.param) == out.end())
        out.push_back(n.param);
    return out;
  }

  // Hash of every piecewise decision taken in the last evaluation (ReLU
  // masks, pooling and min selections). Equal signatures mean two points lie
  // on the same smooth piece.
  std::uint64_t kink_signature() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& n : nodes_) {
      h ^= n.kink_hash;
      h *= 1099511628211ull;
    }
    return h;
  }

 private:
  struct Node {
    explicit Node(OpKind k) : kind(k) {}
    OpKind kind;
    std::vector<NodeId> inputs;
    TensorT value;
    TensorT grad;
    std::string label;
    ParameterT* param = nullptr;
    T scalar_attr{};
    Shape shape_attr;
    std::vector<std::size_t> index_attr;
    std::vector<T> cache;                // conv2d: im2col buffer
    std::vector<std::size_t> selection;  // max_pool2x2 / row_min: chosen source indices
    std::uint64_t kink_hash = 0;
    bool requires_grad = false;
  };

  NodeId op(OpKind kind, std::vector<NodeId> in) {
    Node n(kind);
    n.inputs = std::move(in);
    return push(std::move(n));
  }

  NodeId push(Node n) {
    for (auto id : n.inputs) {
      check_id(id);
      n.requires_grad = n.requires_grad || nodes_[id.index].requires_grad;
    }
    nodes_.push_back(std::move(n));
    const std::size_t i = nodes_.size() - 1;
    try {
      evaluate(i);
    } catch (...) {
      nodes_.pop_back();
      throw;
    }
    return NodeId{i};
  }

  void check_id(NodeId id) const {
    if (id.index >= nodes_.size())
      throw ContractError("node id " + std::to_string(id.index) + " is not part of this graph");
  }

  [[noreturn]] void dim_error(std::size_t i, const std::string& what) const {
    throw DimensionError("node #" + std::to_string(i) + " (" + std::string(op_name(nodes_[i].kind)) +
                         "): " + what);
  }

  const TensorT& in(std::size_t i, std::size_t k) const { return nodes_[nodes_[i].inputs[k].index].value; }

  static std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return h;
  }

  void evaluate(std::size_t i) {
    Node& n = nodes_[i];
    n.kink_hash = 0;
    switch (n.kind) {
      case OpKind::input:
      case OpKind::constant:
        break;
      case OpKind::parameter:
        n.value = n.param->value;
        break;
      case OpKind::conv2d: eval_conv2d(i); break;
      case OpKind::max_pool2x2: eval_max_pool(i); break;
      case OpKind::affine: eval_affine(i); break;
      case OpKind::reshape: {
        const auto& x = in(i, 0);
        if (shape_size(n.shape_attr) != x.size())
          dim_error(i, "cannot reshape " + madda::to_string(x.shape()) + " to " +
                           madda::to_string(n.shape_attr));
        n.value = TensorT(n.shape_attr, x.storage());
        break;
      }
      case OpKind::relu: {
        const auto& x = in(i, 0);
        n.value = TensorT(x.shape());
        std::uint64_t h = 0;
        for (std::size_t j = 0; j < x.size(); ++j) {
          const bool on = x[j] > T{0};
          n.value[j] = on ? x[j] : T{0};
          if (on) h = mix(h, j);
        }
        n.kink_hash = mix(h, x.size());
        break;
      }
      case OpKind::sigmoid: unary(i, [](T v) { return madda::numerics::sigmoid(v); }); break;
      case OpKind::log_sigmoid: unary(i, [](T v) { return madda::numerics::log_sigmoid(v); }); break;
      case OpKind::log: unary(i, [](T v) { return std::log(v); }); break;
      case OpKind::neg: unary(i, [](T v) { return -v; }); break;
      case OpKind::add_scalar: {
        const T c = n.scalar_attr;
        unary(i, [c](T v) { return v + c; });
        break;
      }
      case OpKind::scale: {
        const T c = n.scalar_attr;
        unary(i, [c](T v) { return v * c; });
        break;
      }
      case OpKind::add: binary(i, [](T a, T b) { return a + b; }); break;
      case OpKind::sub: binary(i, [](T a, T b) { return a - b; }); break;
      case OpKind::mul: binary(i, [](T a, T b) { return a * b; }); break;
      case OpKind::gather_rows: {
        const auto& x = in(i, 0);
        if (x.rank() == 0) dim_error(i, "cannot gather rows of a rank-0 tensor");
        const std::size_t stride = x.row_stride();
        Shape s = x.shape();
        s[0] = n.index_attr.size();
        n.value = TensorT(s);
        for (std::size_t r = 0; r < n.index_attr.size(); ++r) {
          const std::size_t src = n.index_attr[r];
          if (src >= x.dim(0))
            dim_error(i, "row index " + std::to_string(src) + " out of range for " +
                             madda::to_string(x.shape()));
          std::copy_n(x.raw() + src * stride, stride, n.value.raw() + r * stride);
        }
        break;
      }
      case OpKind::row_sq_dist: {
        const auto& a = in(i, 0);
        const auto& b = in(i, 1);
        if (a.rank() != 2 || a.shape() != b.shape())
          dim_error(i, "expected equal (T, D) shapes, got " + madda::to_string(a.shape()) + " and " +
                           madda::to_string(b.shape()));
        const std::size_t rows = a.dim(0), d = a.dim(1);
        n.value = TensorT(Shape{rows});
        for (std::size_t r = 0; r < rows; ++r) {
          T acc{0};
          for (std::size_t c = 0; c < d; ++c) {
            const T diff = a[r * d + c] - b[r * d + c];
            acc += diff * diff;
          }
          n.value[r] = acc;
        }
        break;
      }
      case OpKind::sq_dist_matrix: {
        const auto& x = in(i, 0);
        const auto& c = in(i, 1);
        if (x.rank() != 2 || c.rank() != 2 || x.dim(1) != c.dim(1))
          dim_error(i, "expected (B, D) and (K, D), got " + madda::to_string(x.shape()) + " and " +
                           madda::to_string(c.shape()));
        const std::size_t rows = x.dim(0), k = c.dim(0), d = x.dim(1);
        n.value = TensorT(Shape{rows, k});
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < k; ++j) {
            T acc{0};
            for (std::size_t e = 0; e < d; ++e) {
              const T diff = x[r * d + e] - c[j * d + e];
              acc += diff * diff;
            }
            n.value[r * k + j] = acc;
          }
        break;
      }
      case OpKind::row_min: {
        const auto& x = in(i, 0);
        if (x.rank() != 2 || x.dim(1) == 0)
          dim_error(i, "expected (B, K) with K >= 1, got " + madda::to_string(x.shape()));
        const std::size_t rows = x.dim(0), k = x.dim(1);
        n.value = TensorT(Shape{rows});
        n.selection.assign(rows, 0);
        std::uint64_t h = 0;
        for (std::size_t r = 0; r < rows; ++r) {
          std::size_t best = 0;
          for (std::size_t j = 1; j < k; ++j)
            if (x[r * k + j] < x[r * k + best]) best = j;
          n.selection[r] = r * k + best;
          n.value[r] = x[r * k + best];
          h = mix(h, best);
        }
        n.kink_hash = mix(h, rows);
        break;
      }
      case OpKind::sum: {
        const auto& x = in(i, 0);
        T acc{0};
        for (T v : x.data()) acc += v;
        n.value = TensorT::scalar(acc);
        break;
      }
      case OpKind::mean: {
        const auto& x = in(i, 0);
        if (x.size() == 0) dim_error(i, "mean of an empty tensor");
        T acc{0};
        for (T v : x.data()) acc += v;
        n.value = TensorT::scalar(acc / static_cast<T>(x.size()));
        break;
      }
    }
    if (options_.checked && !n.value.all_finite()) {
      throw NumericError("node #" + std::to_string(i) + " (" + std::string(op_name(n.kind)) +
                         (n.label.empty() ? "" : " '" + n.label + "'") + ") produced a non-finite value");
    }
  }

  template <typename F>
  void unary(std::size_t i, F f) {
    const auto& x = in(i, 0);
    TensorT out(x.shape());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = f(x[j]);
    nodes_[i].value = std::move(out);
  }

  template <typename F>
  void binary(std::size_t i, F f) {
    const auto& a = in(i, 0);
    const auto& b = in(i, 1);
    if (a.shape() != b.shape())
      dim_error(i, "operand shapes differ: " + madda::to_string(a.shape()) + " vs " +
                       madda::to_string(b.shape()));
    TensorT out(a.shape());
    for (std::size_t j = 0; j < a.size(); ++j) out[j] = f(a[j], b[j]);
    nodes_[i].value = std::move(out);
  }

  void eval_conv2d(std::size_t i) {
    Node& n = nodes_[i];
    const auto& x = in(i, 0);
    const auto& w = in(i, 1);
    const auto& b = in(i, 2);
    if (x.rank() != 4) dim_error(i, "input must be (B, C, H, W), got " + madda::to_string(x.shape()));
    if (w.rank() != 4) dim_error(i, "kernel must be (O, C, KH, KW), got " + madda::to_string(w.shape()));
    const std::size_t batch = x.dim(0), ch = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t outc = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(1) != ch)
      dim_error(i, "input has " + std::to_string(ch) + " channels but kernel expects " +
                       std::to_string(w.dim(1)));
    if (b.shape() != Shape{outc}) dim_error(i, "bias shape " + madda::to_string(b.shape()) + " != (" +
                                                   std::to_string(outc) + ")");
    if (kh > h || kw > wd) dim_error(i, "kernel larger than input");
    const std::size_t oh = h - kh + 1, ow = wd - kw + 1, plane = oh * ow;
    const std::size_t rows = ch * kh * kw, cols = batch * plane;

    n.cache.assign(rows * cols, T{0});
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t ky = 0; ky < kh; ++ky)
        for (std::size_t kx = 0; kx < kw; ++kx) {
          T* dst = n.cache.data() + ((c * kh + ky) * kw + kx) * cols;
          for (std::size_t bi = 0; bi < batch; ++bi) {
            const T* src = x.raw() + ((bi * ch + c) * h) * wd;
            for (std::size_t y = 0; y < oh; ++y)
              std::copy_n(src + (y + ky) * wd + kx, ow, dst + bi * plane + y * ow);
          }
        }

    std::vector<T> tmp(outc * cols);
    gemm(Transpose::no, Transpose::no, outc, cols, rows, w.raw(), rows, n.cache.data(), cols, tmp.data(),
         cols, false);
    n.value = TensorT(Shape{batch, outc, oh, ow});
    for (std::size_t bi = 0; bi < batch; ++bi)
      for (std::size_t o = 0; o < outc; ++o) {
        const T* src = tmp.data() + o * cols + bi * plane;
        T* dst = n.value.raw() + (bi * outc + o) * plane;
        for (std::size_t p = 0; p < plane; ++p) dst[p] = src[p] + b[o];
      }
  }

  void eval_max_pool(std::size_t i) {
    Node& n = nodes_[i];
    const auto& x = in(i, 0);
    if (x.rank() != 4) dim_error(i, "input must be (B, C, H, W), got " + madda::to_string(x.shape()));
    const std::size_t batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t oh = h / 2, ow = w / 2;
    if (oh == 0 || ow == 0) dim_error(i, "input too small for 2x2 pooling");
    n.value = TensorT(Shape{batch, ch, oh, ow});
    n.selection.assign(n.value.size(), 0);
    std::uint64_t hsh = 0;
    std::size_t o = 0;
    for (std::size_t bc = 0; bc < batch * ch; ++bc) {
      const std::size_t base = bc * h * w;
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx, ++o) {
          std::size_t best = base + (2 * y) * w + 2 * xx;
          const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
          for (std::size_t c : cand)
            if (x[c] > x[best]) best = c;
          n.selection[o] = best;
          n.value[o] = x[best];
          hsh = mix(hsh, best);
        }
    }
    n.kink_hash = hsh;
  }

  void eval_affine(std::size_t i) {
    Node& n = nodes_[i];
    const auto& x = in(i, 0);
    const auto& w = in(i, 1);
    const auto& b = in(i, 2);
    if (x.rank() != 2) dim_error(i, "input must be (B, in), got " + madda::to_string(x.shape()));
    if (w.rank() != 2 || w.dim(1) != x.dim(1))
      dim_error(i, "weight " + madda::to_string(w.shape()) + " incompatible with input " +
                       madda::to_string(x.shape()));
    const std::size_t batch = x.dim(0), fan_in = x.dim(1), fan_out = w.dim(0);
    if (b.shape() != Shape{fan_out})
      dim_error(i, "bias shape " + madda::to_string(b.shape()) + " != (" + std::to_string(fan_out) + ")");
    n.value = TensorT(Shape{batch, fan_out});
    gemm(Transpose::no, Transpose::yes, batch, fan_out, fan_in, x.raw(), fan_in, w.raw(), fan_in,
         n.value.raw(), fan_out, false);
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t o = 0; o < fan_out; ++o) n.value[r * fan_out + o] += b[o];
  }

  // Gradient buffer of input k of node i, allocated on first use; nullptr if
  // that input does not need a gradient.
  TensorT* input_grad(std::size_t i, std::size_t k) {
    Node& src = nodes_[nodes_[i].inputs[k].index];
    if (!src.requires_grad) return nullptr;
    if (src.grad.empty() && src.value.size() != 0) src.grad = TensorT(src.value.shape());
    if (src.grad.shape() != src.value.shape()) src.grad = TensorT(src.value.shape());
    return &src.grad;
  }

  void propagate(std::size_t i) {
    Node& n = nodes_[i];
    const TensorT& g = n.grad;
    switch (n.kind) {
      case OpKind::input:
      case OpKind::constant:
        break;
      case OpKind::parameter: {
        auto& p = *n.param;
        if (p.grad.shape() != p.value.shape()) p.grad = TensorT(p.value.shape());
        for (std::size_t j = 0; j < g.size(); ++j) p.grad[j] += g[j];
        break;
      }
      case OpKind::conv2d: back_conv2d(i); break;
      case OpKind::max_pool2x2:
        if (auto* dx = input_grad(i, 0))
          for (std::size_t j = 0; j < g.size(); ++j) (*dx)[n.selection[j]] += g[j];
        break;
      case OpKind::affine: back_affine(i); break;
      case OpKind::reshape:
        if (auto* dx = input_grad(i, 0))
          for (std::size_t j = 0; j < g.size(); ++j) (*dx)[j] += g[j];
        break;
      case OpKind::relu:
        if (auto* dx = input_grad(i, 0)) {
          const auto& x = in(i, 0);
          for (std::size_t j = 0; j < g.size(); ++j)
            if (x[j] > T{0}) (*dx)[j] += g[j];
        }
        break;
      case OpKind::sigmoid:
        if (auto* dx = input_grad(i, 0))
          for (std::size_t j = 0; j < g.size(); ++j) {
            const T s = n.value[j];
            (*dx)[j] += g[j] * s * (T{1} - s);
          }
        break;
      case OpKind::log_sigmoid:
        if (auto* dx = input_grad(i, 0)) {
          const auto& x = in(i, 0);
          for (std::size_t j = 0; j < g.size(); ++j) (*dx)[j] += g[j] * madda::numerics::sigmoid(-x[j]);
        }
        break;
      case OpKind::log:
        if (auto* dx = input_grad(i, 0)) {
          const auto& x = in(i, 0);
          for (std::size_t j = 0; j < g.size(); ++j) (*dx)[j] += g[j] / x[j];
        }
        break;
      case OpKind::neg:
        if (auto* dx = input_grad(i, 0))
          for (std::size_t j = 0; j < g.size(); ++j) (*dx)[j] -= g[j];
        break;
      case OpKind::add_scalar:
        if (auto* dx = input_grad(i, 0))
          for (std::size_t j = 0; j < g.size(); ++j) (*dx)[j] += g[j];
        break;
      case OpKind::scale:
        if (auto* dx = input_grad(i, 0))
          for (std::size_t j = 0; j < g.size(); ++j) (*dx)[j] += g[j] * n.scalar_attr;
        break;
      case OpKind::add:
      case OpKind::sub: {
        const T sign = n.kind == OpKind::add ? T{1} : T{-1};
        if (auto* da = input_grad(i, 0))
          for (std::size_t j = 0; j < g.size(); ++j) (*da)[j] += g[j];
        if (auto* db = input_grad(i, 1))
          for (std::size_t j = 0; j < g.size(); ++j) (*db)[j] += sign * g[j];
        break;
      }
      case OpKind::mul: {
        const auto& a = in(i, 0);
        const auto& b = in(i, 1);
        if (auto* da = input_grad(i, 0))
          for (std::size_t j = 0; j < g.size(); ++j) (*da)[j] += g[j] * b[j];
        if (auto* db = input_grad(i, 1))
          for (std::size_t j = 0; j < g.size(); ++j) (*db)[j] += g[j] * a[j];
        break;
      }
      case OpKind::gather_rows:
        if (auto* dx = input_grad(i, 0)) {
          const std::size_t stride = dx->row_stride();
          for (std::size_t r = 0; r < n.index_attr.size(); ++r) {
            T* dst = dx->raw() + n.index_attr[r] * stride;
            const T* src = g.raw() + r * stride;
            for (std::size_t c = 0; c < stride; ++c) dst[c] += src[c];
          }
        }
        break;
      case OpKind::row_sq_dist: {
        const auto& a = in(i, 0);
        const auto& b = in(i, 1);
        const std::size_t d = a.dim(1);
        auto* da = input_grad(i, 0);
        auto* db = input_grad(i, 1);
        for (std::size_t r = 0; r < a.dim(0); ++r)
          for (std::size_t c = 0; c < d; ++c) {
            const T t = T{2} * (a[r * d + c] - b[r * d + c]) * g[r];
            if (da) (*da)[r * d + c] += t;
            if (db) (*db)[r * d + c] -= t;
          }
        break;
      }
      case OpKind::sq_dist_matrix: {
        const auto& x = in(i, 0);
        const auto& c = in(i, 1);
        const std::size_t rows = x.dim(0), k = c.dim(0), d = x.dim(1);
        auto* dx = input_grad(i, 0);
        auto* dc = input_grad(i, 1);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < k; ++j) {
            const T gj = g[r * k + j];
            if (gj == T{0}) continue;
            for (std::size_t e = 0; e < d; ++e) {
              const T t = T{2} * (x[r * d + e] - c[j * d + e]) * gj;
              if (dx) (*dx)[r * d + e] += t;
              if (dc) (*dc)[j * d + e] -= t;
            }
          }
        break;
      }
      case OpKind::row_min:
        if (auto* dx = input_grad(i, 0))
          for (std::size_t r = 0; r < g.size(); ++r) (*dx)[n.selection[r]] += g[r];
        break;
      case OpKind::sum:
        if (auto* dx = input_grad(i, 0))
          for (std::size_t j = 0; j < dx->size(); ++j) (*dx)[j] += g[0];
        break;
      case OpKind::mean:
        if (auto* dx = input_grad(i, 0)) {
          const T s = g[0] / static_cast<T>(dx->size());
          for (std::size_t j = 0; j < dx->size(); ++j) (*dx)[j] += s;
        }
        break;
    }
  }

  void back_conv2d(std::size_t i) {
    Node& n = nodes_[i];
    const auto& x = in(i, 0);
    const auto& w = in(i, 1);
    const TensorT& g = n.grad;
    const std::size_t batch = x.dim(0), ch = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t outc = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const std::size_t oh = h - kh + 1, ow = wd - kw + 1, plane = oh * ow;
    const std::size_t rows = ch * kh * kw, cols = batch * plane;

    // (B, O, P) -> (O, B*P)
    std::vector<T> gt(outc * cols);
    for (std::size_t bi = 0; bi < batch; ++bi)
      for (std::size_t o = 0; o < outc; ++o)
        std::copy_n(g.raw() + (bi * outc + o) * plane, plane, gt.data() + o * cols + bi * plane);

    if (auto* dw = input_grad(i, 1))
      gemm(Transpose::no, Transpose::yes, outc, rows, cols, gt.data(), cols, n.cache.data(), cols, dw->raw(),
           rows, true);
    if (auto* db = input_grad(i, 2))
      for (std::size_t o = 0; o < outc; ++o) {
        T acc{0};
        for (std::size_t j = 0; j < cols; ++j) acc += gt[o * cols + j];
        (*db)[o] += acc;
      }
    if (auto* dx = input_grad(i, 0)) {
      std::vector<T> dcols(rows * cols);
      gemm(Transpose::yes, Transpose::no, rows, cols, outc, w.raw(), rows, gt.data(), cols, dcols.data(), cols,
           false);
      for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t ky = 0; ky < kh; ++ky)
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const T* src = dcols.data() + ((c * kh + ky) * kw + kx) * cols;
            for (std::size_t bi = 0; bi < batch; ++bi) {
              T* dst = dx->raw() + ((bi * ch + c) * h) * wd;
              for (std::size_t y = 0; y < oh; ++y) {
                T* drow = dst + (y + ky) * wd + kx;
                const T* srow = src + bi * plane + y * ow;
                for (std::size_t xx = 0; xx < ow; ++xx) drow[xx] += srow[xx];
              }
            }
          }
    }
  }

  void back_affine(std::size_t i) {
    Node& n = nodes_[i];
    const auto& x = in(i, 0);
    const auto& w = in(i, 1);
    const TensorT& g = n.grad;
    const std::size_t batch = x.dim(0), fan_in = x.dim(1), fan_out = w.dim(0);
    if (auto* dx = input_grad(i, 0))
      gemm(Transpose::no, Transpose::no, batch, fan_in, fan_out, g.raw(), fan_out, w.raw(), fan_in, dx->raw(),
           fan_in, true);
    if (auto* dw = input_grad(i, 1))
      gemm(Transpose::yes, Transpose::no, fan_out, fan_in, batch, g.raw(), fan_out, x.raw(), fan_in, dw->raw(),
           fan_in, true);
    if (auto* db = input_grad(i, 2))
      for (std::size_t o = 0; o < fan_out; ++o) {
        T acc{0};
        for (std::size_t r = 0; r < batch; ++r) acc += g[r * fan_out + o];
        (*db)[o] += acc;
      }
  }

  Options options_{};
  std::vector<Node> nodes_;
};

using Graph = BasicGraph<float>;

}  // namespace madda::numerics
