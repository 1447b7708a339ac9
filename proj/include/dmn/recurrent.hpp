#pragma once

#include <optional>

#include "dmn/ops.hpp"
#include "dmn/random.hpp"

namespace dmn {

// SRU layer. The highway term h_t = rho (.) g(c_t) + (1 - rho) (.) x_t
// requires d_in == d_h; stacks pre-project mismatched inputs instead.
struct SruLayer {
  int d;
  Tensor W, W_f, b_f, W_r, b_r;

  SruLayer(int d_in, int d_h, Rng& rng) {
    check(d_in == d_h, "SruLayer: d_in " + std::to_string(d_in) + " != d_h " +
                           std::to_string(d_h) + "; the highway term requires equal sizes");
    d = d_h;
    W = init_uniform({d, d}, d, rng);
    W_f = init_uniform({d, d}, d, rng);
    b_f = Tensor::zeros({d}, true);
    W_r = init_uniform({d, d}, d, rng);
    b_r = Tensor::zeros({d}, true);
  }

  void params(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".W", W);
    out.emplace_back(prefix + ".W_f", W_f);
    out.emplace_back(prefix + ".b_f", b_f);
    out.emplace_back(prefix + ".W_r", W_r);
    out.emplace_back(prefix + ".b_r", b_r);
  }
};

// One SRU step on vectors; g = sigmoid. Returns (c_t, h_t).
inline std::pair<Tensor, Tensor> sru_step(const Tensor& x, const Tensor& c_prev,
                                          const SruLayer& w) {
  check(x.rank() == 1 && x.dim(0) == w.d,
        "sru_step: input shape " + shape_str(x.shape()) + " != (" + std::to_string(w.d) + ")");
  check(c_prev.rank() == 1 && c_prev.dim(0) == w.d,
        "sru_step: state shape " + shape_str(c_prev.shape()) + " != (" + std::to_string(w.d) + ")");
  Tensor x_tilde = affine(x, w.W);
  Tensor f = sigmoid(affine(x, w.W_f, w.b_f));
  Tensor rho = sigmoid(affine(x, w.W_r, w.b_r));
  Tensor c = add(mul(f, c_prev), mul(one_minus(f), x_tilde));
  Tensor h = add(mul(rho, sigmoid(c)), mul(one_minus(rho), x));
  return {c, h};
}

// Same recurrence applied per spatial location via 1x1 convolutions.
inline std::pair<Tensor, Tensor> sru_step_map(const Tensor& x, const Tensor& c_prev,
                                              const SruLayer& w) {
  check(x.rank() == 3 && x.dim(0) == w.d,
        "sru_step_map: input shape " + shape_str(x.shape()) + " channels != " + std::to_string(w.d));
  int h_sz = x.dim(1), w_sz = x.dim(2);
  Tensor x_tilde = conv1x1(x, w.W);
  Tensor f = sigmoid(add(conv1x1(x, w.W_f), tile_vector(w.b_f, h_sz, w_sz)));
  Tensor rho = sigmoid(add(conv1x1(x, w.W_r), tile_vector(w.b_r, h_sz, w_sz)));
  Tensor c = add(mul(f, c_prev), mul(one_minus(f), x_tilde));
  Tensor h = add(mul(rho, sigmoid(c)), mul(one_minus(rho), x));
  return {c, h};
}

struct SruStack {
  int d_in = 0, d_h = 0;
  // present only when d_in != d_h
  std::optional<std::pair<Tensor, Tensor>> in_proj;  // (W (d_h,d_in), b (d_h))
  std::vector<SruLayer> layers;

  SruStack() = default;
  SruStack(int d_in_, int d_h_, int n_layers, Rng& rng) : d_in(d_in_), d_h(d_h_) {
    check(n_layers >= 1, "SruStack: need at least one layer");
    if (d_in != d_h)
      in_proj = {init_uniform({d_h, d_in}, d_in, rng), Tensor::zeros({d_h}, true)};
    for (int l = 0; l < n_layers; ++l) layers.emplace_back(d_h, d_h, rng);
  }

  void params(const std::string& prefix, NamedParams& out) const {
    if (in_proj) {
      out.emplace_back(prefix + ".in_proj.W", in_proj->first);
      out.emplace_back(prefix + ".in_proj.b", in_proj->second);
    }
    for (size_t l = 0; l < layers.size(); ++l)
      layers[l].params(prefix + ".layer" + std::to_string(l), out);
  }
};

// Stacked scan over a vector sequence; returns the top-layer hidden sequence.
// Initial cell states are zero.
inline std::vector<Tensor> sru_scan(const std::vector<Tensor>& seq, const SruStack& stack) {
  check(!seq.empty(), "sru_scan: empty sequence (a query has at least one word)");
  std::vector<Tensor> cur = seq;
  if (stack.in_proj)
    for (auto& x : cur) x = affine(x, stack.in_proj->first, stack.in_proj->second);
  for (const auto& layer : stack.layers) {
    Tensor c = Tensor::zeros({layer.d});
    std::vector<Tensor> next;
    next.reserve(cur.size());
    for (const auto& x : cur) {
      auto [c_t, h_t] = sru_step(x, c, layer);
      c = c_t;
      next.push_back(h_t);
    }
    cur = std::move(next);
  }
  return cur;
}

// Multimodal SRU: each spatial location is an independent sequence sharing one
// weight set; returns the final-time top-layer hidden state as a (d_h,H,W) map.
inline Tensor msru_scan(const std::vector<Tensor>& maps, const SruStack& stack) {
  check(!maps.empty(), "msru_scan: empty sequence");
  const Shape& ref = maps[0].shape();
  check(ref.size() == 3, "msru_scan: inputs must be (C,H,W), got " + shape_str(ref));
  for (const auto& m : maps)
    check(m.shape() == ref, "msru_scan: inconsistent shapes across time, " +
                                shape_str(m.shape()) + " vs " + shape_str(ref));
  check(ref[0] == stack.d_in, "msru_scan: input channels " + std::to_string(ref[0]) +
                                  " != stack input size " + std::to_string(stack.d_in));
  int h_sz = ref[1], w_sz = ref[2];

  std::vector<Tensor> cur = maps;
  if (stack.in_proj)
    for (auto& m : cur)
      m = add(conv1x1(m, stack.in_proj->first), tile_vector(stack.in_proj->second, h_sz, w_sz));
  for (const auto& layer : stack.layers) {
    Tensor c = Tensor::zeros({layer.d, h_sz, w_sz});
    std::vector<Tensor> next;
    next.reserve(cur.size());
    for (const auto& m : cur) {
      auto [c_t, h_t] = sru_step_map(m, c, layer);
      c = c_t;
      next.push_back(h_t);
    }
    cur = std::move(next);
  }
  return cur.back();
}

// LSTM baseline: four gates from [x_t, h_prev], gate order (i, f, g, o).
struct LstmLayer {
  int d_in, d_h;
  Tensor W_g;  // (4*d_h, d_in + d_h)
  Tensor b_g;  // (4*d_h)

  LstmLayer(int d_in_, int d_h_, Rng& rng) : d_in(d_in_), d_h(d_h_) {
    W_g = init_uniform({4 * d_h, d_in + d_h}, d_in + d_h, rng);
    b_g = Tensor::zeros({4 * d_h}, true);
  }

  void params(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".W_g", W_g);
    out.emplace_back(prefix + ".b_g", b_g);
  }
};

// Returns (c_t, h_t).
inline std::pair<Tensor, Tensor> lstm_step(const Tensor& x, const Tensor& h_prev,
                                           const Tensor& c_prev, const LstmLayer& w) {
  check(x.rank() == 1 && x.dim(0) == w.d_in,
        "lstm_step: input shape " + shape_str(x.shape()) + " != (" + std::to_string(w.d_in) + ")");
  Tensor gates = affine(concat({x, h_prev}), w.W_g, w.b_g);
  Tensor i = sigmoid(slice0(gates, 0, w.d_h));
  Tensor f = sigmoid(slice0(gates, w.d_h, w.d_h));
  Tensor g = tanh_op(slice0(gates, 2 * w.d_h, w.d_h));
  Tensor o = sigmoid(slice0(gates, 3 * w.d_h, w.d_h));
  Tensor c = add(mul(f, c_prev), mul(i, g));
  Tensor h = mul(o, tanh_op(c));
  return {c, h};
}

struct LstmStack {
  std::vector<LstmLayer> layers;

  LstmStack() = default;
  LstmStack(int d_in, int d_h, int n_layers, Rng& rng) {
    check(n_layers >= 1, "LstmStack: need at least one layer");
    for (int l = 0; l < n_layers; ++l) layers.emplace_back(l == 0 ? d_in : d_h, d_h, rng);
  }

  void params(const std::string& prefix, NamedParams& out) const {
    for (size_t l = 0; l < layers.size(); ++l)
      layers[l].params(prefix + ".layer" + std::to_string(l), out);
  }
};

inline std::vector<Tensor> lstm_scan(const std::vector<Tensor>& seq, const LstmStack& stack) {
  check(!seq.empty(), "lstm_scan: empty sequence (a query has at least one word)");
  std::vector<Tensor> cur = seq;
  for (const auto& layer : stack.layers) {
    Tensor h = Tensor::zeros({layer.d_h});
    Tensor c = Tensor::zeros({layer.d_h});
    std::vector<Tensor> next;
    next.reserve(cur.size());
    for (const auto& x : cur) {
      auto [c_t, h_t] = lstm_step(x, h, c, layer);
      c = c_t;
      h = h_t;
      next.push_back(h_t);
    }
    cur = std::move(next);
  }
  return cur;
}

inline long sru_layer_param_count(long d_in, long d_h) { return 3 * d_in * d_h + 2 * d_h; }

inline long lstm_layer_param_count(long d_in, long d_h) {
  return 4 * (d_in + d_h) * d_h + 4 * d_h;
}

inline long sru_stack_param_count(long d_in, long d_h, int n_layers) {
  long total = (d_in != d_h) ? d_h * d_in + d_h : 0;
  for (int l = 0; l < n_layers; ++l) total += sru_layer_param_count(d_h, d_h);
  return total;
}

inline long lstm_stack_param_count(long d_in, long d_h, int n_layers) {
  long total = 0;
  for (int l = 0; l < n_layers; ++l) total += lstm_layer_param_count(l == 0 ? d_in : d_h, d_h);
  return total;
}

}  // namespace dmn
