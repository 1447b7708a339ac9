#pragma once

#include "dmn/ops.hpp"
#include "dmn/random.hpp"

namespace dmn {

struct BackboneConfig {
  int n_scales = 5;
  std::vector<int> channels = {16, 32, 64, 96, 128};
  int blocks_per_scale = 1;
};

// Convolutional pyramid encoder: each scale halves the spatial extents with a
// stride-2 3x3 convolution, optionally followed by stride-1 3x3 convolutions,
// ReLU after each. Fully convolutional; any admissible input size works.
class Backbone {
 public:
  Backbone() = default;

  Backbone(const BackboneConfig& cfg, Rng& rng, int in_channels = 3) : cfg_(cfg) {
    check(cfg.n_scales >= 2, "Backbone: need at least 2 scales");
    check((int)cfg.channels.size() == cfg.n_scales,
          "Backbone: channel list length " + std::to_string(cfg.channels.size()) +
              " != n_scales " + std::to_string(cfg.n_scales));
    check(cfg.blocks_per_scale >= 1, "Backbone: blocks_per_scale must be positive");
    for (int c : cfg.channels) check(c > 0, "Backbone: channel widths must be positive");
    int prev = in_channels;
    for (int n = 0; n < cfg.n_scales; ++n) {
      std::vector<ConvBlock> blocks;
      int out = cfg.channels[n];
      blocks.push_back(make_block(prev, out, 2, rng));
      for (int b = 1; b < cfg.blocks_per_scale; ++b) blocks.push_back(make_block(out, out, 1, rng));
      scales_.push_back(std::move(blocks));
      prev = out;
    }
  }

  const BackboneConfig& config() const { return cfg_; }

  // {I_n}, n = 1..N; I_n is (C_n, H/2^n, W/2^n).
  std::vector<Tensor> forward(const Tensor& image) const {
    check(image.rank() == 3, "vm_forward: image must be (C,H,W), got " + shape_str(image.shape()));
    int div = 1 << cfg_.n_scales;
    check(image.dim(1) % div == 0 && image.dim(2) % div == 0,
          "vm_forward: image extents " + std::to_string(image.dim(1)) + "x" +
              std::to_string(image.dim(2)) + " must be divisible by 2^N = " + std::to_string(div));
    std::vector<Tensor> pyramid;
    Tensor x = image;
    for (const auto& blocks : scales_) {
      for (const auto& blk : blocks) x = relu(conv2d(x, blk.k, blk.b, blk.stride, 1));
      pyramid.push_back(x);
    }
    return pyramid;
  }

  void params(const std::string& prefix, NamedParams& out) const {
    for (size_t n = 0; n < scales_.size(); ++n)
      for (size_t b = 0; b < scales_[n].size(); ++b) {
        std::string base = prefix + ".scale" + std::to_string(n) + ".block" + std::to_string(b);
        out.emplace_back(base + ".k", scales_[n][b].k);
        out.emplace_back(base + ".b", scales_[n][b].b);
      }
  }

 private:
  struct ConvBlock {
    Tensor k, b;
    int stride;
  };

  static ConvBlock make_block(int c_in, int c_out, int stride, Rng& rng) {
    return {init_uniform({c_out, c_in, 3, 3}, c_in * 9, rng), Tensor::zeros({c_out}, true), stride};
  }

  BackboneConfig cfg_;
  std::vector<std::vector<ConvBlock>> scales_;
};

}  // namespace dmn
