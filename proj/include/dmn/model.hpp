#pragma once

#include <json.hpp>

#include "dmn/checkpoint.hpp"
#include "dmn/synthesis.hpp"
#include "dmn/upsample.hpp"
#include "dmn/visual.hpp"

namespace dmn {

enum class Stage { low_res, high_res };

inline std::string stage_name(Stage s) { return s == Stage::low_res ? "low" : "high"; }

inline Stage parse_stage(const std::string& s) {
  if (s == "low" || s == "low_res") return Stage::low_res;
  if (s == "high" || s == "high_res") return Stage::high_res;
  throw ContractViolation("unknown stage '" + s + "' (expected low|high)");
}

struct AblationFlags {
  bool only_vm = false;
  bool r_is_h = false;
  bool no_skip = false;
  bool no_filters = false;
  bool no_rt_concat = false;
};

struct DmnConfig {
  BackboneConfig backbone{3, {8, 16, 32}, 1};
  int d_e = 32;
  int d_h = 32;
  int lang_layers = 2;
  int K = 4;
  int c_m = 32;
  int msru_layers = 2;
  int msru_width = 32;
  int c_loc = kLocChannels;
  bool filters_see_loc = true;
  int um_stages = -1;  // -1: N-1 skip stages
  AblationFlags ablation;
  Scalar lr = 1e-5;
  Scalar pos_weight = 1.0;
  bool end_to_end_stage2 = false;
  uint64_t seed = 0;

  int n_scales() const { return backbone.n_scales; }
  int c_n() const { return backbone.channels.back(); }
  int r_width() const { return ablation.r_is_h ? d_h : d_e + d_h; }
  int filter_len() const { return c_n() + (filters_see_loc ? c_loc : 0); }
  int merge_width() const {
    return c_n() + (ablation.no_filters ? 0 : K) + c_loc +
           (ablation.no_rt_concat ? 0 : r_width());
  }
  int decoder_stages() const { return um_stages < 0 ? backbone.n_scales - 1 : um_stages; }

  // Hyperparameters reported for the full-scale model.
  static DmnConfig paper_scale() {
    DmnConfig cfg;
    cfg.backbone = {5, {16, 32, 64, 96, 128}, 1};
    cfg.d_e = 1000;
    cfg.d_h = 1000;
    cfg.lang_layers = 2;
    cfg.K = 10;
    cfg.c_m = 1000;
    cfg.msru_layers = 3;
    cfg.msru_width = 1000;
    return cfg;
  }
};

inline void to_json(nlohmann::json& j, const DmnConfig& c) {
  j = {{"n_scales", c.backbone.n_scales},
       {"channels", c.backbone.channels},
       {"blocks_per_scale", c.backbone.blocks_per_scale},
       {"d_e", c.d_e},
       {"d_h", c.d_h},
       {"lang_layers", c.lang_layers},
       {"K", c.K},
       {"c_m", c.c_m},
       {"msru_layers", c.msru_layers},
       {"msru_width", c.msru_width},
       {"c_loc", c.c_loc},
       {"filters_see_loc", c.filters_see_loc},
       {"um_stages", c.um_stages},
       {"only_vm", c.ablation.only_vm},
       {"r_is_h", c.ablation.r_is_h},
       {"no_skip", c.ablation.no_skip},
       {"no_filters", c.ablation.no_filters},
       {"no_rt_concat", c.ablation.no_rt_concat},
       {"lr", c.lr},
       {"pos_weight", c.pos_weight},
       {"end_to_end_stage2", c.end_to_end_stage2},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, DmnConfig& c) {
  DmnConfig d;
  c.backbone.n_scales = j.value("n_scales", d.backbone.n_scales);
  c.backbone.channels = j.value("channels", d.backbone.channels);
  c.backbone.blocks_per_scale = j.value("blocks_per_scale", d.backbone.blocks_per_scale);
  c.d_e = j.value("d_e", d.d_e);
  c.d_h = j.value("d_h", d.d_h);
  c.lang_layers = j.value("lang_layers", d.lang_layers);
  c.K = j.value("K", d.K);
  c.c_m = j.value("c_m", d.c_m);
  c.msru_layers = j.value("msru_layers", d.msru_layers);
  c.msru_width = j.value("msru_width", d.msru_width);
  c.c_loc = j.value("c_loc", d.c_loc);
  c.filters_see_loc = j.value("filters_see_loc", d.filters_see_loc);
  c.um_stages = j.value("um_stages", d.um_stages);
  c.ablation.only_vm = j.value("only_vm", false);
  c.ablation.r_is_h = j.value("r_is_h", false);
  c.ablation.no_skip = j.value("no_skip", false);
  c.ablation.no_filters = j.value("no_filters", false);
  c.ablation.no_rt_concat = j.value("no_rt_concat", false);
  c.lr = j.value("lr", d.lr);
  c.pos_weight = j.value("pos_weight", d.pos_weight);
  c.end_to_end_stage2 = j.value("end_to_end_stage2", d.end_to_end_stage2);
  c.seed = j.value("seed", d.seed);
}

// The full network: VM + LM + SM + UM, plus the low-resolution head used by
// training stage 1 and the visual-only ablation path.
class DmnModel {
 public:
  DmnModel(const DmnConfig& cfg, const Vocabulary& vocab, Rng& rng)
      : cfg_(cfg), vocab_(vocab), vm_(cfg.backbone, rng) {
    if (cfg.ablation.only_vm) {
      vm_only_w_ = init_uniform({cfg.msru_width, cfg.c_n()}, cfg.c_n(), rng);
      vm_only_b_ = Tensor::zeros({cfg.msru_width}, true);
    } else {
      embedding_ = init_uniform({vocab.size(), cfg.d_e}, cfg.d_e, rng);
      lm_ = SruStack(cfg.d_e, cfg.d_h, cfg.lang_layers, rng);
      gen_ = FilterGenerator(cfg.K, cfg.filter_len(), cfg.r_width(), rng);
      fusion_ = FusionWeights(cfg.c_m, cfg.merge_width(), rng);
      msru_ = SruStack(cfg.c_m, cfg.msru_width, cfg.msru_layers, rng);
    }
    um_ = UmWeights(cfg.msru_width, cfg.backbone.channels, cfg.decoder_stages(),
                    cfg.ablation.no_skip, rng);
    lowres_w_ = init_uniform({1, cfg.msru_width}, cfg.msru_width, rng);
    lowres_b_ = Tensor::zeros({1}, true);
  }

  const DmnConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }

  // Multimodal trunk output R_N; `detach_trunk` cuts the graph for UM-only
  // finetuning.
  Tensor trunk(const Tensor& image, const std::vector<int>& ids,
               std::vector<Tensor>* pyramid_out = nullptr) const {
    std::vector<Tensor> pyramid = vm_.forward(image);
    const Tensor& top = pyramid.back();
    Tensor r_top;
    if (cfg_.ablation.only_vm) {
      r_top = relu(conv1x1(top, vm_only_w_, vm_only_b_));
    } else {
      Tensor loc = make_loc(top.dim(1), top.dim(2), cfg_.c_loc);
      LanguageOutput lang = lm_forward(ids, embedding_, lm_, gen_, cfg_.ablation.r_is_h);
      SmFlags flags{cfg_.ablation.no_filters, cfg_.ablation.no_rt_concat};
      r_top = sm_forward(top, loc, lang, fusion_, msru_, flags, cfg_.filters_see_loc);
    }
    if (pyramid_out) *pyramid_out = std::move(pyramid);
    return r_top;
  }

  // Heatmap: full resolution in high_res stage, 1/2^N resolution in low_res.
  Tensor forward(const Tensor& image, const std::vector<int>& ids, Stage stage,
                 bool detach_trunk = false) const {
    std::vector<Tensor> pyramid;
    Tensor r_top = trunk(image, ids, &pyramid);
    if (stage == Stage::low_res) return lowres_head(r_top, lowres_w_, lowres_b_);
    if (detach_trunk) {
      r_top = detach(r_top);
      for (auto& p : pyramid) p = detach(p);
    }
    return um_forward(r_top, pyramid, um_, cfg_.ablation.no_skip);
  }

  NamedParams parameters() const {
    NamedParams out;
    vm_.params("vm", out);
    if (cfg_.ablation.only_vm) {
      out.emplace_back("vm_only.W", vm_only_w_);
      out.emplace_back("vm_only.b", vm_only_b_);
    } else {
      out.emplace_back("lm.embedding", embedding_);
      lm_.params("lm.sru", out);
      gen_.params("lm.filters", out);
      fusion_.params("sm.fusion", out);
      msru_.params("sm.msru", out);
    }
    um_params(out);
    out.emplace_back("lowres.W", lowres_w_);
    out.emplace_back("lowres.b", lowres_b_);
    return out;
  }

  NamedParams um_parameters() const {
    NamedParams out;
    um_params(out);
    return out;
  }

  // Parameters trained in stage 1 (everything except the UM decoder).
  NamedParams trunk_parameters() const {
    NamedParams all = parameters(), out;
    for (auto& [name, p] : all)
      if (name.rfind("um.", 0) != 0) out.emplace_back(name, p);
    return out;
  }

  void save(const std::string& path) const {
    nlohmann::json meta;
    meta["config"] = cfg_;
    meta["vocab"] = vocab_.tokens();
    save_checkpoint(path, parameters(), meta);
  }

  static DmnModel load(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    check(ckpt.meta.contains("config"), "checkpoint missing embedded config: " + path);
    DmnConfig cfg = ckpt.meta.at("config").get<DmnConfig>();
    Vocabulary vocab;
    for (const auto& tok : ckpt.meta.value("vocab", std::vector<std::string>{}))
      vocab.add(tok);
    Rng rng(cfg.seed);
    DmnModel model(cfg, vocab, rng);
    restore_params(model.parameters(), ckpt);
    return model;
  }

  // Loads stage-1 weights into this model; UM and low-res head entries that
  // the checkpoint lacks keep their fresh initialization. Structural config
  // fields must agree.
  void restore_trunk(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    check(ckpt.meta.contains("config"), "checkpoint missing embedded config: " + path);
    DmnConfig other = ckpt.meta.at("config").get<DmnConfig>();
    require_compatible(other);
    for (const auto& [name, p] : parameters()) {
      auto it = ckpt.params.find(name);
      if (it == ckpt.params.end()) continue;
      check(it->second.shape() == p.shape(),
            "checkpoint parameter '" + name + "' shape mismatch");
      const_cast<Tensor&>(p).data() = it->second.data();
    }
  }

  const Backbone& backbone() const { return vm_; }

 private:
  void um_params(NamedParams& out) const { um_.params("um", out); }

  void require_compatible(const DmnConfig& other) const {
    std::vector<std::string> diffs;
    auto cmp = [&](const char* field, auto a, auto b) {
      if (a != b) diffs.push_back(field);
    };
    cmp("n_scales", cfg_.backbone.n_scales, other.backbone.n_scales);
    if (cfg_.backbone.channels != other.backbone.channels) diffs.push_back("channels");
    cmp("blocks_per_scale", cfg_.backbone.blocks_per_scale, other.backbone.blocks_per_scale);
    cmp("d_e", cfg_.d_e, other.d_e);
    cmp("d_h", cfg_.d_h, other.d_h);
    cmp("lang_layers", cfg_.lang_layers, other.lang_layers);
    cmp("K", cfg_.K, other.K);
    cmp("c_m", cfg_.c_m, other.c_m);
    cmp("msru_layers", cfg_.msru_layers, other.msru_layers);
    cmp("msru_width", cfg_.msru_width, other.msru_width);
    cmp("c_loc", cfg_.c_loc, other.c_loc);
    cmp("filters_see_loc", cfg_.filters_see_loc, other.filters_see_loc);
    cmp("only_vm", cfg_.ablation.only_vm, other.ablation.only_vm);
    cmp("r_is_h", cfg_.ablation.r_is_h, other.ablation.r_is_h);
    cmp("no_filters", cfg_.ablation.no_filters, other.ablation.no_filters);
    cmp("no_rt_concat", cfg_.ablation.no_rt_concat, other.ablation.no_rt_concat);
    if (!diffs.empty()) {
      std::string msg = "checkpoint/config mismatch in fields:";
      for (const auto& d : diffs) msg += " " + d;
      throw ContractViolation(msg);
    }
  }

  DmnConfig cfg_;
  Vocabulary vocab_;
  Backbone vm_;
  Tensor embedding_;
  SruStack lm_;
  FilterGenerator gen_;
  FusionWeights fusion_;
  SruStack msru_;
  UmWeights um_;
  Tensor lowres_w_, lowres_b_;
  Tensor vm_only_w_, vm_only_b_;
};

}  // namespace dmn
