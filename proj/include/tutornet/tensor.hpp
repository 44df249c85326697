#pragma once

// Dense double-precision tensors with reverse-mode gradients.
//
// A Tensor is a cheap shared handle. Values are immutable after
// construction except through mutable_values() (used by the optimizer on
// leaf parameters); the gradient accumulator is the only other mutable
// state. Ops build a DAG of nodes; backward() walks it once in reverse
// topological order. Graphs on different threads must be disjoint.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace tutornet {

struct TensorError : std::runtime_error {
  explicit TensorError(const std::string& msg) : std::runtime_error(msg) {}
};

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw TensorError("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

class Tensor {
 public:
  struct Impl {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;     // allocated on first accumulation
    bool requires_grad = false;   // leaf that accumulates gradient
    bool needs_grad = false;      // this or some ancestor requires grad
    std::vector<Tensor> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Impl&)> backprop;
  };

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), 0.0, requires_grad);
  }

  static Tensor filled(Shape shape, double value, bool requires_grad = false) {
    auto impl = std::make_shared<Impl>();
    std::int64_t n = shape_numel(shape);
    impl->shape = std::move(shape);
    impl->values.assign(static_cast<std::size_t>(n), value);
    impl->requires_grad = requires_grad;
    impl->needs_grad = requires_grad;
    return Tensor(std::move(impl));
  }

  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false) {
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
      throw TensorError("value count " + std::to_string(values.size()) +
                        " does not match shape " + shape_str(shape));
    auto impl = std::make_shared<Impl>();
    impl->shape = std::move(shape);
    impl->values = std::move(values);
    impl->requires_grad = requires_grad;
    impl->needs_grad = requires_grad;
    return Tensor(std::move(impl));
  }

  static Tensor scalar(double v) { return from({1}, {v}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl().shape; }
  std::int64_t numel() const { return static_cast<std::int64_t>(impl().values.size()); }
  const std::vector<double>& values() const { return impl().values; }

  // Direct value mutation; only meaningful on leaves (graph nodes would
  // go stale). The optimizer is the intended caller.
  std::vector<double>& mutable_values() {
    if (!impl().parents.empty())
      throw TensorError("mutating a non-leaf tensor invalidates its graph");
    return impl().values;
  }

  double item() const {
    if (numel() != 1) throw TensorError("item() on non-scalar " + shape_str(shape()));
    return impl().values[0];
  }

  // NCHW convenience accessor.
  double at(int n, int c, int h, int w) const {
    const Shape& s = shape();
    if (s.size() != 4) throw TensorError("at(n,c,h,w) needs a rank-4 tensor");
    return impl().values[((static_cast<std::size_t>(n) * s[1] + c) * s[2] + h) * s[3] + w];
  }

  bool requires_grad() const { return impl().requires_grad; }
  bool needs_grad() const { return impl().needs_grad; }
  bool has_grad() const { return !impl().grad.empty(); }

  const std::vector<double>& grad() const {
    if (!has_grad()) throw TensorError("tensor has no accumulated gradient");
    return impl().grad;
  }

  void zero_grad() { impl().grad.clear(); }

  // New leaf with identical values and no gradient history.
  Tensor detach() const { return from(shape(), values()); }

  // Reverse pass from a scalar, seeding d/dself = 1. Gradients accumulate
  // into every reachable tensor with needs_grad set.
  void backward() {
    if (numel() != 1) throw TensorError("backward() requires a scalar root");
    std::vector<Impl*> order;
    std::unordered_set<Impl*> seen;
    topo_visit(impl_.get(), seen, order);
    accumulate(impl(), {1.0});
    for (auto it = order.rbegin(); it != order.rend(); ++it)
      if ((*it)->backprop && !(*it)->grad.empty()) (*it)->backprop(**it);
  }

  static void accumulate(Impl& node, const std::vector<double>& g) {
    if (node.grad.empty()) node.grad.assign(node.values.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) node.grad[i] += g[i];
  }

  Impl& impl() const {
    if (!impl_) throw TensorError("use of an empty tensor handle");
    return *impl_;
  }
  const std::shared_ptr<Impl>& impl_ptr() const { return impl_; }

  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

 private:
  static void topo_visit(Impl* node, std::unordered_set<Impl*>& seen,
                         std::vector<Impl*>& order) {
    if (!node || seen.count(node)) return;
    seen.insert(node);
    // Iterative DFS; graphs from deep nets overflow the stack otherwise.
    struct Frame { Impl* n; std::size_t next; };
    std::vector<Frame> stack{{node, 0}};
    seen.insert(node);
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next < f.n->parents.size()) {
        Impl* p = f.n->parents[f.next++].impl_.get();
        if (p && !seen.count(p) && p->needs_grad) {
          seen.insert(p);
          stack.push_back({p, 0});
        }
      } else {
        order.push_back(f.n);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<Impl> impl_;
};

namespace detail {

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

// Disables graph capture on the current thread for its lifetime; forwards
// made under a guard are plain value computations (evaluation paths).
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

namespace detail {

// Node constructor shared by all ops. backprop may be empty for ops whose
// inputs carry no gradient; such results are plain value tensors.
inline Tensor make_node(Shape shape, std::vector<double> values,
                        std::vector<Tensor> parents,
                        std::function<void(Tensor::Impl&)> backprop) {
  bool needs = false;
  if (grad_mode())
    for (const Tensor& p : parents) needs = needs || p.needs_grad();
  auto impl = std::make_shared<Tensor::Impl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->needs_grad = needs;
  if (needs) {
    impl->parents = std::move(parents);
    impl->backprop = std::move(backprop);
  }
  return Tensor(std::move(impl));
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw TensorError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                      " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---- elementwise ----------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return detail::make_node(a.shape(), std::move(out), {a, b}, [a, b](Tensor::Impl& self) {
    if (a.needs_grad()) Tensor::accumulate(a.impl(), self.grad);
    if (b.needs_grad()) Tensor::accumulate(b.impl(), self.grad);
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return detail::make_node(a.shape(), std::move(out), {a, b}, [a, b](Tensor::Impl& self) {
    if (a.needs_grad()) Tensor::accumulate(a.impl(), self.grad);
    if (b.needs_grad()) {
      auto& g = b.impl().grad;
      if (g.empty()) g.assign(b.values().size(), 0.0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return detail::make_node(a.shape(), std::move(out), {a, b}, [a, b](Tensor::Impl& self) {
    auto side = [&self](const Tensor& dst, const Tensor& other) {
      if (!dst.needs_grad()) return;
      auto& g = dst.impl().grad;
      if (g.empty()) g.assign(dst.values().size(), 0.0);
      const auto& ov = other.values();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * ov[i];
    };
    side(a, b);
    side(b, a);
  });
}

inline Tensor square(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& v : out) v *= v;
  return detail::make_node(a.shape(), std::move(out), {a}, [a](Tensor::Impl& self) {
    auto& g = a.impl().grad;
    if (g.empty()) g.assign(a.values().size(), 0.0);
    const auto& av = a.values();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * av[i] * self.grad[i];
  });
}

inline Tensor relu(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return detail::make_node(a.shape(), std::move(out), {a}, [a](Tensor::Impl& self) {
    auto& g = a.impl().grad;
    if (g.empty()) g.assign(a.values().size(), 0.0);
    const auto& av = a.values();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (av[i] > 0.0) g[i] += self.grad[i];
  });
}

inline double sigmoid_value(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& v : out) v = sigmoid_value(v);
  // Captures the output values: dy/dx = y(1-y).
  auto y = std::make_shared<std::vector<double>>(out);
  return detail::make_node(a.shape(), std::move(out), {a}, [a, y](Tensor::Impl& self) {
    auto& g = a.impl().grad;
    if (g.empty()) g.assign(a.values().size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] += self.grad[i] * (*y)[i] * (1.0 - (*y)[i]);
  });
}

// Piecewise activation: sigmoid(x) for x > 0, the constant floor otherwise.
// The x <= 0 branch is flat, so no gradient flows through it. Outputs are
// capped just below 1 because sigmoid saturates to exactly 1.0 in doubles
// past x ~ 37 and callers rely on the half-open range.
inline Tensor floored_sigmoid(const Tensor& a, double floor_value) {
  const double cap = std::nextafter(1.0, 0.0);
  std::vector<double> out(a.values());
  for (double& v : out) v = v > 0.0 ? std::min(sigmoid_value(v), cap) : floor_value;
  return detail::make_node(a.shape(), std::move(out), {a}, [a](Tensor::Impl& self) {
    auto& g = a.impl().grad;
    if (g.empty()) g.assign(a.values().size(), 0.0);
    const auto& av = a.values();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (av[i] > 0.0) {
        double s = sigmoid_value(av[i]);
        g[i] += self.grad[i] * s * (1.0 - s);
      }
  });
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (double& v : out) v *= c;
  return detail::make_node(a.shape(), std::move(out), {a}, [a, c](Tensor::Impl& self) {
    auto& g = a.impl().grad;
    if (g.empty()) g.assign(a.values().size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * self.grad[i];
  });
}

inline Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (double& v : out) v += c;
  return detail::make_node(a.shape(), std::move(out), {a}, [a](Tensor::Impl& self) {
    if (a.needs_grad()) Tensor::accumulate(a.impl(), self.grad);
  });
}

// max(a_i, c); the tie a_i == c routes no gradient.
inline Tensor max_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (double& v : out) v = v > c ? v : c;
  return detail::make_node(a.shape(), std::move(out), {a}, [a, c](Tensor::Impl& self) {
    auto& g = a.impl().grad;
    if (g.empty()) g.assign(a.values().size(), 0.0);
    const auto& av = a.values();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (av[i] > c) g[i] += self.grad[i];
  });
}

// ---- reductions -----------------------------------------------------------

inline Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  return detail::make_node({1}, {acc}, {a}, [a](Tensor::Impl& self) {
    auto& g = a.impl().grad;
    if (g.empty()) g.assign(a.values().size(), 0.0);
    for (double& v : g) v += self.grad[0];
  });
}

inline Tensor mean(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  double n = static_cast<double>(a.numel());
  return detail::make_node({1}, {acc / n}, {a}, [a, n](Tensor::Impl& self) {
    auto& g = a.impl().grad;
    if (g.empty()) g.assign(a.values().size(), 0.0);
    for (double& v : g) v += self.grad[0] / n;
  });
}

}  // namespace tutornet
