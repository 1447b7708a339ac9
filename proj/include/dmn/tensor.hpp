#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace dmn {

using Scalar = double;
using Shape = std::vector<int>;

class ContractViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw ContractViolation(msg);
}

inline long numel(const Shape& s) {
  long n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

// Graph recording can be switched off for pure inference / finite differences.
inline bool& grad_mode() {
  static thread_local bool on = true;
  return on;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev; }
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<Scalar> v;
  std::vector<Scalar> g;  // allocated lazily
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  void ensure_grad() {
    if (g.size() != v.size()) g.assign(v.size(), 0.0);
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<Scalar> values, bool requires_grad = false) {
    check((long)values.size() == numel(shape),
          "tensor values length " + std::to_string(values.size()) +
              " does not match shape " + shape_str(shape));
    impl_ = std::make_shared<detail::Node>();
    impl_->shape = std::move(shape);
    impl_->v = std::move(values);
    impl_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return Tensor(std::move(shape), std::vector<Scalar>(0), requires_grad, Fill{0.0});
  }

  static Tensor full(Shape shape, Scalar value, bool requires_grad = false) {
    return Tensor(std::move(shape), std::vector<Scalar>(0), requires_grad, Fill{value});
  }

  static Tensor scalar(Scalar value) { return Tensor({1}, {value}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int dim(int i) const { return impl_->shape[i]; }
  int rank() const { return (int)impl_->shape.size(); }
  long size() const { return (long)impl_->v.size(); }

  std::vector<Scalar>& data() { return impl_->v; }
  const std::vector<Scalar>& data() const { return impl_->v; }
  Scalar val(long i = 0) const { return impl_->v[i]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

  bool has_grad() const { return impl_->g.size() == impl_->v.size(); }
  std::vector<Scalar>& grad() {
    impl_->ensure_grad();
    return impl_->g;
  }
  const std::vector<Scalar>& grad() const {
    impl_->ensure_grad();
    return impl_->g;
  }
  void clear_grad() { impl_->g.clear(); }

  // Reverse-mode pass from a scalar. Gradients accumulate into every
  // requires_grad node reachable through the recorded graph.
  void backward() const {
    check(size() == 1, "backward() requires a scalar, got shape " + shape_str(shape()));
    if (!impl_->requires_grad) return;

    // iterative post-order over requires_grad nodes
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    struct Frame {
      detail::Node* n;
      size_t next;
    };
    std::vector<Frame> stack;
    stack.push_back({impl_.get(), 0});
    seen.insert(impl_.get());
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next < f.n->parents.size()) {
        detail::Node* p = f.n->parents[f.next++].get();
        if (p->requires_grad && !seen.count(p)) {
          seen.insert(p);
          stack.push_back({p, 0});
        }
      } else {
        order.push_back(f.n);
        stack.pop_back();
      }
    }

    impl_->ensure_grad();
    impl_->g[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      detail::Node* n = *it;
      if (!n->backprop) continue;
      for (auto& p : n->parents)
        if (p->requires_grad) p->ensure_grad();
      n->backprop(*n);
    }
  }

  std::shared_ptr<detail::Node> impl() const { return impl_; }

 private:
  struct Fill {
    Scalar value;
  };
  Tensor(Shape shape, std::vector<Scalar>, bool requires_grad, Fill fill) {
    impl_ = std::make_shared<detail::Node>();
    impl_->v.assign(numel(shape), fill.value);
    impl_->shape = std::move(shape);
    impl_->requires_grad = requires_grad;
  }

  std::shared_ptr<detail::Node> impl_;
};

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

// Builds an op result node. `bp` receives the result node; it reads the
// result's grad and accumulates into the parents it captured.
inline Tensor make_op(Shape shape, std::vector<Scalar> values,
                      const std::vector<Tensor>& parents,
                      std::function<void(detail::Node&)> bp) {
  Tensor out(std::move(shape), std::move(values));
  if (grad_mode()) {
    bool rg = false;
    for (const auto& p : parents) rg = rg || p.requires_grad();
    if (rg) {
      out.impl()->requires_grad = true;
      for (const auto& p : parents) out.impl()->parents.push_back(p.impl());
      out.impl()->backprop = std::move(bp);
    }
  }
  return out;
}

}  // namespace dmn
