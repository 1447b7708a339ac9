#pragma once

#include "dmn/language.hpp"

namespace dmn {

constexpr int kLocChannels = 8;

// Parameter-free spatial-coordinate encoding. Channels, in order:
// x, y, x^2, y^2, x*y, 1/w, 1/h, 1, with x and y the normalized pixel-center
// coordinates in [-1, 1]. `c_loc` keeps a prefix of that list.
inline Tensor make_loc(int h, int w, int c_loc = kLocChannels) {
  check(h >= 1 && w >= 1, "make_loc: extents must be positive");
  check(c_loc >= 0 && c_loc <= kLocChannels,
        "make_loc: c_loc must be in [0," + std::to_string(kLocChannels) + "]");
  std::vector<Scalar> v((size_t)c_loc * h * w);
  long hw = (long)h * w;
  for (int i = 0; i < h; ++i) {
    Scalar y = -1.0 + 2.0 * (i + 0.5) / h;
    for (int j = 0; j < w; ++j) {
      Scalar x = -1.0 + 2.0 * (j + 0.5) / w;
      Scalar ch[kLocChannels] = {x, y, x * x, y * y, x * y, 1.0 / w, 1.0 / h, 1.0};
      for (int c = 0; c < c_loc; ++c) v[c * hw + i * w + j] = ch[c];
    }
  }
  return Tensor({c_loc, h, w}, std::move(v));
}

// Response maps: channel k is the 1x1 convolution of the dynamic filter
// f_{k,t} over [I_N | loc] (or I_N alone when loc has no channels).
inline Tensor filter_responses(const Tensor& visual, const Tensor& loc,
                               const std::vector<Tensor>& filters_t) {
  check(!filters_t.empty(), "filter_responses: no filters");
  Tensor cat = (loc.defined() && loc.dim(0) > 0) ? concat({visual, loc}) : visual;
  int width = cat.dim(0);
  std::vector<Tensor> channels;
  for (const auto& f : filters_t) {
    check(f.rank() == 1 && f.dim(0) == width,
          "filter_responses: filter length " + std::to_string(f.size()) +
              " != feature width " + std::to_string(width));
    channels.push_back(conv1x1(cat, reshape(f, {1, width})));
  }
  return concat(channels);
}

struct FusionWeights {
  Tensor W;  // (C_m, concat width)
  Tensor b;  // (C_m)

  FusionWeights() = default;
  FusionWeights(int c_m, int width, Rng& rng)
      : W(init_uniform({c_m, width}, width, rng)), b(Tensor::zeros({c_m}, true)) {}

  void params(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".W", W);
    out.emplace_back(prefix + ".b", b);
  }
};

struct SmFlags {
  bool no_filters = false;
  bool no_rt_concat = false;
};

// M_t = ReLU(Conv1x1([I_N | F_t | LOC | r_t tiled])); ablation flags drop the
// F_t or r_t blocks.
inline Tensor merge_step(const Tensor& visual, const Tensor& responses, const Tensor& loc,
                         const Tensor& r_t, const FusionWeights& fusion, const SmFlags& flags = {}) {
  int h = visual.dim(1), w = visual.dim(2);
  std::vector<Tensor> blocks = {visual};
  if (!flags.no_filters) {
    check(responses.defined(), "merge_step: missing response maps");
    check(responses.dim(1) == h && responses.dim(2) == w,
          "merge_step: response maps " + shape_str(responses.shape()) +
              " spatial size != visual " + shape_str(visual.shape()));
    blocks.push_back(responses);
  }
  if (loc.defined() && loc.dim(0) > 0) blocks.push_back(loc);
  if (!flags.no_rt_concat) {
    check(r_t.defined(), "merge_step: missing language feature");
    blocks.push_back(tile_vector(r_t, h, w));
  }
  Tensor cat = concat(blocks);
  check(cat.dim(0) == fusion.W.dim(1),
        "merge_step: concat width " + std::to_string(cat.dim(0)) + " != fusion kernel width " +
            std::to_string(fusion.W.dim(1)));
  return relu(conv1x1(cat, fusion.W, fusion.b));
}

// Builds {M_t} and aggregates with the multimodal SRU into R_N.
inline Tensor sm_forward(const Tensor& visual, const Tensor& loc, const LanguageOutput& lang,
                         const FusionWeights& fusion, const SruStack& msru,
                         const SmFlags& flags = {}, bool filters_see_loc = true) {
  check(!lang.r_seq.empty(), "sm_forward: empty language output");
  std::vector<Tensor> merged;
  for (size_t t = 0; t < lang.r_seq.size(); ++t) {
    Tensor responses;
    if (!flags.no_filters)
      responses = filter_responses(visual, filters_see_loc ? loc : Tensor(), lang.filters[t]);
    merged.push_back(merge_step(visual, responses, loc, lang.r_seq[t], fusion, flags));
  }
  return msru_scan(merged, msru);
}

}  // namespace dmn
