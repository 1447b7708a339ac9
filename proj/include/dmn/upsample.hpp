#pragma once

#include "dmn/ops.hpp"
#include "dmn/random.hpp"

namespace dmn {

struct UmStage {
  Tensor k;  // (C_out, C_in, 3, 3)
  Tensor b;  // (C_out)

  UmStage() = default;
  UmStage(int c_in, int c_out, Rng& rng)
      : k(init_uniform({c_out, c_in, 3, 3}, c_in * 9, rng)), b(Tensor::zeros({c_out}, true)) {}
};

// One decoding stage: concat the skip map, 3x3 conv (pad 1) + ReLU, then
// double the spatial extents by bilinear interpolation.
inline Tensor um_stage(const Tensor& r_n, const Tensor& skip, const UmStage& w) {
  Tensor in = r_n;
  if (skip.defined()) {
    check(skip.dim(1) == r_n.dim(1) && skip.dim(2) == r_n.dim(2),
          "um_stage: skip map " + shape_str(skip.shape()) + " spatial size != decoder map " +
              shape_str(r_n.shape()));
    in = concat({r_n, skip});
  }
  check(in.dim(0) == w.k.dim(1), "um_stage: input channels " + std::to_string(in.dim(0)) +
                                     " != stage kernel input " + std::to_string(w.k.dim(1)));
  return bilinear_upsample_x2(relu(conv2d(in, w.k, w.b, 1, 1)));
}

struct UmWeights {
  std::vector<UmStage> stages;  // applied for n = N down to N-stages+1
  Tensor head_w;                // (1, C_last)
  Tensor head_b;                // (1)

  UmWeights() = default;

  // Decoder widths halve per stage from `r_channels` (floor, minimum 1).
  UmWeights(int r_channels, const std::vector<int>& skip_channels, int n_stages, bool no_skip,
            Rng& rng) {
    check(n_stages >= 0 && n_stages <= (int)skip_channels.size(),
          "UmWeights: stage count " + std::to_string(n_stages) + " out of range");
    int n = (int)skip_channels.size();  // = N
    int cur = r_channels;
    for (int s = 0; s < n_stages; ++s) {
      int skip_c = no_skip ? 0 : skip_channels[n - 1 - s];
      int out = std::max(1, cur / 2);
      stages.emplace_back(cur + skip_c, out, rng);
      cur = out;
    }
    head_w = init_uniform({1, cur}, cur, rng);
    head_b = Tensor::zeros({1}, true);
  }

  void params(const std::string& prefix, NamedParams& out) const {
    for (size_t s = 0; s < stages.size(); ++s) {
      out.emplace_back(prefix + ".stage" + std::to_string(s) + ".k", stages[s].k);
      out.emplace_back(prefix + ".stage" + std::to_string(s) + ".b", stages[s].b);
    }
    out.emplace_back(prefix + ".head.W", head_w);
    out.emplace_back(prefix + ".head.b", head_b);
  }
};

// Skip-connected decoding from R_N to a full-resolution sigmoid heatmap.
// Runs the configured stages (default N-1, consuming I_N..I_2), applies the
// 1x1 head, then doubles until full resolution.
inline Tensor um_forward(const Tensor& r_top, const std::vector<Tensor>& pyramid,
                         const UmWeights& w, bool no_skip = false) {
  int n = (int)pyramid.size();
  check(n >= 1, "um_forward: empty pyramid");
  check(r_top.dim(1) == pyramid[n - 1].dim(1) && r_top.dim(2) == pyramid[n - 1].dim(2),
        "um_forward: R_N " + shape_str(r_top.shape()) + " spatial size != I_N " +
            shape_str(pyramid[n - 1].shape()));
  Tensor x = r_top;
  for (size_t s = 0; s < w.stages.size(); ++s) {
    Tensor skip = no_skip ? Tensor() : pyramid[n - 1 - (int)s];
    x = um_stage(x, skip, w.stages[s]);
  }
  x = conv1x1(x, w.head_w, w.head_b);
  int target_h = pyramid[0].dim(1) * 2;
  while (x.dim(1) < target_h) x = bilinear_upsample_x2(x);
  return sigmoid(x);
}

// Low-resolution head (training stage 1): 1x1 conv + sigmoid on R_N directly.
inline Tensor lowres_head(const Tensor& r_top, const Tensor& head_w, const Tensor& head_b) {
  return sigmoid(conv1x1(r_top, head_w, head_b));
}

inline std::vector<uint8_t> binarize(const Tensor& heatmap, Scalar theta) {
  check(theta >= 0.0 && theta <= 1.0,
        "binarize: threshold " + std::to_string(theta) + " outside [0,1]");
  std::vector<uint8_t> mask(heatmap.size());
  for (long i = 0; i < heatmap.size(); ++i) mask[i] = heatmap.val(i) >= theta ? 1 : 0;
  return mask;
}

}  // namespace dmn
