#pragma once

#include <algorithm>

#include "dmn/tensor.hpp"

namespace dmn {

namespace detail {

template <class F, class DF>
Tensor unary_op(const Tensor& x, F f, DF df) {
  std::vector<Scalar> out(x.size());
  const auto& xv = x.data();
  for (long i = 0; i < x.size(); ++i) out[i] = f(xv[i]);
  auto xi = x.impl();
  return make_op(x.shape(), std::move(out), {x}, [xi, df](Node& n) {
    if (!xi->requires_grad) return;
    for (size_t i = 0; i < n.v.size(); ++i) xi->g[i] += n.g[i] * df(xi->v[i], n.v[i]);
  });
}

}  // namespace detail

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  check(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<Scalar> out(a.size());
  for (long i = 0; i < a.size(); ++i) out[i] = a.val(i) + b.val(i);
  auto ai = a.impl(), bi = b.impl();
  return make_op(a.shape(), std::move(out), {a, b}, [ai, bi](detail::Node& n) {
    if (ai->requires_grad)
      for (size_t i = 0; i < n.v.size(); ++i) ai->g[i] += n.g[i];
    if (bi->requires_grad)
      for (size_t i = 0; i < n.v.size(); ++i) bi->g[i] += n.g[i];
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<Scalar> out(a.size());
  for (long i = 0; i < a.size(); ++i) out[i] = a.val(i) - b.val(i);
  auto ai = a.impl(), bi = b.impl();
  return make_op(a.shape(), std::move(out), {a, b}, [ai, bi](detail::Node& n) {
    if (ai->requires_grad)
      for (size_t i = 0; i < n.v.size(); ++i) ai->g[i] += n.g[i];
    if (bi->requires_grad)
      for (size_t i = 0; i < n.v.size(); ++i) bi->g[i] -= n.g[i];
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<Scalar> out(a.size());
  for (long i = 0; i < a.size(); ++i) out[i] = a.val(i) * b.val(i);
  auto ai = a.impl(), bi = b.impl();
  return make_op(a.shape(), std::move(out), {a, b}, [ai, bi](detail::Node& n) {
    if (ai->requires_grad)
      for (size_t i = 0; i < n.v.size(); ++i) ai->g[i] += n.g[i] * bi->v[i];
    if (bi->requires_grad)
      for (size_t i = 0; i < n.v.size(); ++i) bi->g[i] += n.g[i] * ai->v[i];
  });
}

inline Tensor scale(const Tensor& x, Scalar a) {
  return detail::unary_op(x, [a](Scalar v) { return a * v; },
                          [a](Scalar, Scalar) { return a; });
}

inline Tensor one_minus(const Tensor& x) {
  return detail::unary_op(x, [](Scalar v) { return 1.0 - v; },
                          [](Scalar, Scalar) { return -1.0; });
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary_op(
      x,
      [](Scalar v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        Scalar e = std::exp(v);
        return e / (1.0 + e);
      },
      [](Scalar, Scalar y) { return y * (1.0 - y); });
}

inline Tensor tanh_op(const Tensor& x) {
  return detail::unary_op(x, [](Scalar v) { return std::tanh(v); },
                          [](Scalar, Scalar y) { return 1.0 - y * y; });
}

inline Tensor relu(const Tensor& x) {
  return detail::unary_op(x, [](Scalar v) { return v > 0 ? v : 0.0; },
                          [](Scalar v, Scalar) { return v > 0 ? 1.0 : 0.0; });
}

inline Tensor sum(const Tensor& x) {
  Scalar s = 0;
  for (long i = 0; i < x.size(); ++i) s += x.val(i);
  auto xi = x.impl();
  return make_op({1}, {s}, {x}, [xi](detail::Node& n) {
    if (!xi->requires_grad) return;
    for (auto& gi : xi->g) gi += n.g[0];
  });
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / (Scalar)x.size()); }

// Detach from the recorded graph: same values, no parents.
inline Tensor detach(const Tensor& x) { return Tensor(x.shape(), x.data()); }

// Concatenation along axis 0. All inputs share rank and trailing dims.
inline Tensor concat(const std::vector<Tensor>& parts) {
  check(!parts.empty(), "concat: no inputs");
  const Shape& ref = parts[0].shape();
  long block = 1;
  for (size_t i = 1; i < ref.size(); ++i) block *= ref[i];
  int total0 = 0;
  for (const auto& p : parts) {
    check(p.rank() == (int)ref.size(), "concat: rank mismatch");
    for (size_t i = 1; i < ref.size(); ++i)
      check(p.dim((int)i) == ref[i], "concat: trailing dim " + std::to_string(i) +
                                         " mismatch: " + shape_str(p.shape()) + " vs " +
                                         shape_str(ref));
    total0 += p.dim(0);
  }
  Shape out_shape = ref;
  out_shape[0] = total0;
  std::vector<Scalar> out;
  out.reserve(total0 * block);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());

  std::vector<std::shared_ptr<detail::Node>> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  return make_op(std::move(out_shape), std::move(out), parts, [impls](detail::Node& n) {
    size_t off = 0;
    for (auto& pi : impls) {
      size_t len = pi->v.size();
      if (pi->requires_grad)
        for (size_t i = 0; i < len; ++i) pi->g[i] += n.g[off + i];
      off += len;
    }
  });
}

// Slice along axis 0: rows [start, start+len).
inline Tensor slice0(const Tensor& x, int start, int len) {
  check(start >= 0 && len >= 1 && start + len <= x.dim(0),
        "slice0: range [" + std::to_string(start) + "," + std::to_string(start + len) +
            ") out of bounds for dim0 " + std::to_string(x.dim(0)));
  long block = x.size() / x.dim(0);
  std::vector<Scalar> out(x.data().begin() + start * block,
                          x.data().begin() + (start + len) * block);
  Shape out_shape = x.shape();
  out_shape[0] = len;
  auto xi = x.impl();
  long off = start * block;
  return make_op(std::move(out_shape), std::move(out), {x}, [xi, off](detail::Node& n) {
    if (!xi->requires_grad) return;
    for (size_t i = 0; i < n.v.size(); ++i) xi->g[off + i] += n.g[i];
  });
}

inline Tensor reshape(const Tensor& x, Shape new_shape) {
  check(numel(new_shape) == x.size(), "reshape: numel mismatch " + shape_str(x.shape()) +
                                          " -> " + shape_str(new_shape));
  auto xi = x.impl();
  return make_op(std::move(new_shape), x.data(), {x}, [xi](detail::Node& n) {
    if (!xi->requires_grad) return;
    for (size_t i = 0; i < n.v.size(); ++i) xi->g[i] += n.g[i];
  });
}

// Embedding lookup: row `id` of a (V, d) matrix as a (d,) vector.
inline Tensor row(const Tensor& table, int id) {
  check(table.rank() == 2, "row: expected matrix, got " + shape_str(table.shape()));
  check(id >= 0 && id < table.dim(0),
        "row: id " + std::to_string(id) + " out of range [0," + std::to_string(table.dim(0)) + ")");
  return reshape(slice0(table, id, 1), {table.dim(1)});
}

// Broadcast a (d,) vector to a (d, h, w) map.
inline Tensor tile_vector(const Tensor& v, int h, int w) {
  check(v.rank() == 1, "tile_vector: expected vector, got " + shape_str(v.shape()));
  int d = v.dim(0);
  std::vector<Scalar> out((size_t)d * h * w);
  long hw = (long)h * w;
  for (int c = 0; c < d; ++c)
    std::fill(out.begin() + c * hw, out.begin() + (c + 1) * hw, v.val(c));
  auto vi = v.impl();
  return make_op({d, h, w}, std::move(out), {v}, [vi, hw](detail::Node& n) {
    if (!vi->requires_grad) return;
    int d = n.shape[0];
    for (int c = 0; c < d; ++c) {
      Scalar acc = 0;
      for (long p = 0; p < hw; ++p) acc += n.g[c * hw + p];
      vi->g[c] += acc;
    }
  });
}

// W x + b for vectors; b may be undefined.
inline Tensor affine(const Tensor& x, const Tensor& W, const Tensor& b = Tensor()) {
  check(x.rank() == 1 && W.rank() == 2, "affine: expected vector and matrix, got " +
                                            shape_str(x.shape()) + ", " + shape_str(W.shape()));
  int d_in = x.dim(0), d_out = W.dim(0);
  check(W.dim(1) == d_in, "affine: W columns " + std::to_string(W.dim(1)) +
                              " != input size " + std::to_string(d_in));
  bool has_b = b.defined();
  if (has_b)
    check(b.rank() == 1 && b.dim(0) == d_out,
          "affine: bias shape " + shape_str(b.shape()) + " != (" + std::to_string(d_out) + ")");

  std::vector<Scalar> out(d_out);
  const auto& wv = W.data();
  const auto& xv = x.data();
  for (int o = 0; o < d_out; ++o) {
    Scalar acc = has_b ? b.val(o) : 0.0;
    const Scalar* wr = wv.data() + (long)o * d_in;
    for (int i = 0; i < d_in; ++i) acc += wr[i] * xv[i];
    out[o] = acc;
  }

  std::vector<Tensor> parents = {x, W};
  if (has_b) parents.push_back(b);
  auto xi = x.impl(), Wi = W.impl();
  auto bi = has_b ? b.impl() : nullptr;
  return make_op({d_out}, std::move(out), parents, [xi, Wi, bi, d_in, d_out](detail::Node& n) {
    for (int o = 0; o < d_out; ++o) {
      Scalar go = n.g[o];
      if (go == 0.0) continue;
      const Scalar* wr = Wi->v.data() + (long)o * d_in;
      if (xi->requires_grad)
        for (int i = 0; i < d_in; ++i) xi->g[i] += go * wr[i];
      if (Wi->requires_grad) {
        Scalar* gw = Wi->g.data() + (long)o * d_in;
        for (int i = 0; i < d_in; ++i) gw[i] += go * xi->v[i];
      }
      if (bi && bi->requires_grad) bi->g[o] += go;
    }
  });
}

// Zero-padded 2D convolution: x (C_in,H,W), k (C_out,C_in,kh,kw), b (C_out) optional.
inline Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& b, int stride, int pad) {
  check(x.rank() == 3, "conv2d: input must be (C,H,W), got " + shape_str(x.shape()));
  check(k.rank() == 4, "conv2d: kernel must be (Cout,Cin,kh,kw), got " + shape_str(k.shape()));
  int c_in = x.dim(0), h = x.dim(1), w = x.dim(2);
  int c_out = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  check(k.dim(1) == c_in, "conv2d: kernel input channels " + std::to_string(k.dim(1)) +
                              " != input channels " + std::to_string(c_in));
  check(kh >= 1 && kw >= 1, "conv2d: empty kernel extent");
  check(h + 2 * pad >= kh, "conv2d: padded height " + std::to_string(h + 2 * pad) +
                               " < kernel height " + std::to_string(kh));
  check(w + 2 * pad >= kw, "conv2d: padded width " + std::to_string(w + 2 * pad) +
                               " < kernel width " + std::to_string(kw));
  check(stride >= 1, "conv2d: stride must be positive");
  bool has_b = b.defined();
  if (has_b)
    check(b.rank() == 1 && b.dim(0) == c_out,
          "conv2d: bias shape " + shape_str(b.shape()) + " != (" + std::to_string(c_out) + ")");

  int oh = (h + 2 * pad - kh) / stride + 1;
  int ow = (w + 2 * pad - kw) / stride + 1;
  std::vector<Scalar> out((size_t)c_out * oh * ow, 0.0);
  const auto& xv = x.data();
  const auto& kv = k.data();
  for (int co = 0; co < c_out; ++co) {
    Scalar bias = has_b ? b.val(co) : 0.0;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        Scalar acc = bias;
        for (int ci = 0; ci < c_in; ++ci) {
          const Scalar* xp = xv.data() + (long)ci * h * w;
          const Scalar* kp = kv.data() + (((long)co * c_in + ci) * kh) * kw;
          for (int ky = 0; ky < kh; ++ky) {
            int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < kw; ++kx) {
              int ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= w) continue;
              acc += kp[ky * kw + kx] * xp[iy * w + ix];
            }
          }
        }
        out[((long)co * oh + oy) * ow + ox] = acc;
      }
    }
  }

  std::vector<Tensor> parents = {x, k};
  if (has_b) parents.push_back(b);
  auto xi = x.impl(), ki = k.impl();
  auto bi = has_b ? b.impl() : nullptr;
  auto bp = [xi, ki, bi, c_in, h, w, c_out, kh, kw, oh, ow, stride, pad](detail::Node& n) {
    for (int co = 0; co < c_out; ++co) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          Scalar go = n.g[((long)co * oh + oy) * ow + ox];
          if (go == 0.0) continue;
          if (bi && bi->requires_grad) bi->g[co] += go;
          for (int ci = 0; ci < c_in; ++ci) {
            const Scalar* xp = xi->v.data() + (long)ci * h * w;
            long koff = (((long)co * c_in + ci) * kh) * kw;
            for (int ky = 0; ky < kh; ++ky) {
              int iy = oy * stride + ky - pad;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < kw; ++kx) {
                int ix = ox * stride + kx - pad;
                if (ix < 0 || ix >= w) continue;
                if (xi->requires_grad)
                  xi->g[(long)ci * h * w + iy * w + ix] += go * ki->v[koff + ky * kw + kx];
                if (ki->requires_grad) ki->g[koff + ky * kw + kx] += go * xp[iy * w + ix];
              }
            }
          }
        }
      }
    }
  };
  return make_op({c_out, oh, ow}, std::move(out), parents, std::move(bp));
}

// Pointwise convolution: x (C_in,H,W), W (C_out,C_in), b (C_out) optional.
inline Tensor conv1x1(const Tensor& x, const Tensor& W, const Tensor& b = Tensor()) {
  check(x.rank() == 3 && W.rank() == 2, "conv1x1: expected (C,H,W) map and (Cout,Cin) matrix, got " +
                                            shape_str(x.shape()) + ", " + shape_str(W.shape()));
  int c_in = x.dim(0), h = x.dim(1), w = x.dim(2);
  int c_out = W.dim(0);
  check(W.dim(1) == c_in, "conv1x1: weight columns " + std::to_string(W.dim(1)) +
                              " != input channels " + std::to_string(c_in));
  bool has_b = b.defined();
  if (has_b)
    check(b.rank() == 1 && b.dim(0) == c_out,
          "conv1x1: bias shape " + shape_str(b.shape()) + " != (" + std::to_string(c_out) + ")");

  long hw = (long)h * w;
  std::vector<Scalar> out((size_t)c_out * hw);
  const auto& xv = x.data();
  for (int co = 0; co < c_out; ++co) {
    Scalar* yp = out.data() + co * hw;
    std::fill(yp, yp + hw, has_b ? b.val(co) : 0.0);
    for (int ci = 0; ci < c_in; ++ci) {
      Scalar wv = W.val((long)co * c_in + ci);
      if (wv == 0.0) continue;
      const Scalar* xp = xv.data() + ci * hw;
      for (long p = 0; p < hw; ++p) yp[p] += wv * xp[p];
    }
  }

  std::vector<Tensor> parents = {x, W};
  if (has_b) parents.push_back(b);
  auto xi = x.impl(), Wi = W.impl();
  auto bi = has_b ? b.impl() : nullptr;
  return make_op({c_out, h, w}, std::move(out), parents,
                 [xi, Wi, bi, c_in, c_out, hw](detail::Node& n) {
                   for (int co = 0; co < c_out; ++co) {
                     const Scalar* gp = n.g.data() + co * hw;
                     if (bi && bi->requires_grad) {
                       Scalar acc = 0;
                       for (long p = 0; p < hw; ++p) acc += gp[p];
                       bi->g[co] += acc;
                     }
                     for (int ci = 0; ci < c_in; ++ci) {
                       const Scalar* xp = xi->v.data() + ci * hw;
                       Scalar wv = Wi->v[(long)co * c_in + ci];
                       if (xi->requires_grad) {
                         Scalar* gx = xi->g.data() + ci * hw;
                         for (long p = 0; p < hw; ++p) gx[p] += gp[p] * wv;
                       }
                       if (Wi->requires_grad) {
                         Scalar acc = 0;
                         for (long p = 0; p < hw; ++p) acc += gp[p] * xp[p];
                         Wi->g[(long)co * c_in + ci] += acc;
                       }
                     }
                   }
                 });
}

namespace detail {

// Half-pixel-center sampling with edge clamping; shared by forward and backward.
struct LerpAxis {
  std::vector<int> i0, i1;
  std::vector<Scalar> w1;  // weight of i1; i0 gets 1-w1
  explicit LerpAxis(int n_in) {
    int n_out = 2 * n_in;
    i0.resize(n_out);
    i1.resize(n_out);
    w1.resize(n_out);
    for (int i = 0; i < n_out; ++i) {
      Scalar src = (i + 0.5) / 2.0 - 0.5;
      src = std::clamp(src, 0.0, (Scalar)(n_in - 1));
      int lo = (int)std::floor(src);
      int hi = std::min(lo + 1, n_in - 1);
      i0[i] = lo;
      i1[i] = hi;
      w1[i] = src - lo;
    }
  }
};

}  // namespace detail

inline Tensor bilinear_upsample_x2(const Tensor& x) {
  check(x.rank() == 3, "bilinear_upsample_x2: input must be (C,H,W), got " + shape_str(x.shape()));
  int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  check(h >= 1 && w >= 1, "bilinear_upsample_x2: empty spatial extent");
  detail::LerpAxis ay(h), ax(w);
  int oh = 2 * h, ow = 2 * w;
  std::vector<Scalar> out((size_t)c * oh * ow);
  const auto& xv = x.data();
  for (int ch = 0; ch < c; ++ch) {
    const Scalar* xp = xv.data() + (long)ch * h * w;
    Scalar* yp = out.data() + (long)ch * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      Scalar wy = ay.w1[oy];
      const Scalar* r0 = xp + ay.i0[oy] * w;
      const Scalar* r1 = xp + ay.i1[oy] * w;
      for (int ox = 0; ox < ow; ++ox) {
        Scalar wx = ax.w1[ox];
        Scalar top = (1 - wx) * r0[ax.i0[ox]] + wx * r0[ax.i1[ox]];
        Scalar bot = (1 - wx) * r1[ax.i0[ox]] + wx * r1[ax.i1[ox]];
        yp[oy * ow + ox] = (1 - wy) * top + wy * bot;
      }
    }
  }
  auto xi = x.impl();
  return make_op({c, oh, ow}, std::move(out), {x}, [xi, ay, ax, c, h, w](detail::Node& n) {
    if (!xi->requires_grad) return;
    int oh = 2 * h, ow = 2 * w;
    for (int ch = 0; ch < c; ++ch) {
      Scalar* gx = xi->g.data() + (long)ch * h * w;
      const Scalar* gy = n.g.data() + (long)ch * oh * ow;
      for (int oy = 0; oy < oh; ++oy) {
        Scalar wy = ay.w1[oy];
        for (int ox = 0; ox < ow; ++ox) {
          Scalar go = gy[oy * ow + ox];
          if (go == 0.0) continue;
          Scalar wx = ax.w1[ox];
          gx[ay.i0[oy] * w + ax.i0[ox]] += go * (1 - wy) * (1 - wx);
          gx[ay.i0[oy] * w + ax.i1[ox]] += go * (1 - wy) * wx;
          gx[ay.i1[oy] * w + ax.i0[ox]] += go * wy * (1 - wx);
          gx[ay.i1[oy] * w + ax.i1[ox]] += go * wy * wx;
        }
      }
    }
  });
}

// Weighted binary cross-entropy, mean over pixels. `target` is binary, no grad.
inline Tensor bce_loss(const Tensor& pred, const Tensor& target, Scalar pos_weight = 1.0) {
  check(pred.shape() == target.shape(),
        "bce_loss: prediction " + shape_str(pred.shape()) + " vs ground truth " +
            shape_str(target.shape()) +
            " resolution mismatch; downsample the ground truth mask for the low-resolution stage");
  const Scalar eps = 1e-12;
  long n_px = pred.size();
  Scalar loss = 0;
  for (long i = 0; i < n_px; ++i) {
    Scalar p = std::clamp(pred.val(i), eps, 1.0 - eps);
    Scalar t = target.val(i);
    loss -= pos_weight * t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  loss /= (Scalar)n_px;
  auto pi = pred.impl(), ti = target.impl();
  return make_op({1}, {loss}, {pred, target},
                 [pi, ti, pos_weight, eps, n_px](detail::Node& n) {
                   if (!pi->requires_grad) return;
                   Scalar g0 = n.g[0] / (Scalar)n_px;
                   for (long i = 0; i < n_px; ++i) {
                     Scalar p = std::clamp(pi->v[i], eps, 1.0 - eps);
                     Scalar t = ti->v[i];
                     pi->g[i] += g0 * (-pos_weight * t / p + (1.0 - t) / (1.0 - p));
                   }
                 });
}

}  // namespace dmn
