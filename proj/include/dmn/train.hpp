#pragma once

#include <functional>

#include "dmn/metrics.hpp"
#include "dmn/optim.hpp"

namespace dmn {

// Nearest-neighbor downsampling keeps the mask binary. Samples the center of
// each factor x factor cell.
inline Tensor downsample_mask(const Tensor& mask, int factor) {
  check(mask.rank() == 3 && mask.dim(0) == 1, "downsample_mask: expected (1,H,W)");
  int h = mask.dim(1), w = mask.dim(2);
  check(h % factor == 0 && w % factor == 0, "downsample_mask: extents not divisible by factor");
  int oh = h / factor, ow = w / factor;
  std::vector<Scalar> out((size_t)oh * ow);
  for (int i = 0; i < oh; ++i)
    for (int j = 0; j < ow; ++j)
      out[(size_t)i * ow + j] = mask.val((long)(i * factor + factor / 2) * w + j * factor + factor / 2);
  return Tensor({1, oh, ow}, std::move(out));
}

struct TrainOptions {
  int epochs = 10;
  Scalar lr = 1e-5;
  Scalar pos_weight = 1.0;
  bool end_to_end = false;  // stage 2: finetune everything, not just the UM
  std::function<void(int, Scalar, Scalar)> on_epoch;  // (epoch, mean loss, lr)
};

struct TrainResult {
  std::vector<Scalar> epoch_losses;
};

// One-image-query-per-step training with Adam and the plateau scheduler.
// Stage low_res trains the trunk against 1/2^N ground truth; stage high_res
// trains the UM (or everything with end_to_end) at full resolution.
inline TrainResult train(DmnModel& model, const std::vector<Example>& train_set, Stage stage,
                         const TrainOptions& opts) {
  check(!train_set.empty(), "train: empty dataset");
  NamedParams params;
  bool detach_trunk = false;
  if (stage == Stage::low_res) {
    params = model.parameters();
    // the UM does not participate in stage 1
    NamedParams filtered;
    for (auto& [name, p] : params)
      if (name.rfind("um.", 0) != 0) filtered.emplace_back(name, p);
    params = std::move(filtered);
  } else if (opts.end_to_end) {
    // the low-res head does not participate in the full-resolution path
    for (auto& [name, p] : model.parameters())
      if (name.rfind("lowres.", 0) != 0) params.emplace_back(name, p);
  } else {
    params = model.um_parameters();
    detach_trunk = true;
  }

  Adam opt({.lr = opts.lr});
  PlateauScheduler sched;
  int factor = 1 << model.config().n_scales();

  TrainResult result;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    Scalar loss_sum = 0;
    for (const auto& ex : train_set) {
      Tensor image = image_to_tensor(ex);
      std::vector<int> ids = model.config().ablation.only_vm
                                 ? std::vector<int>{}
                                 : model.vocab().encode(ex.query);
      Tensor gt = mask_to_tensor(ex);
      Tensor pred = model.forward(image, ids, stage, detach_trunk);
      if (stage == Stage::low_res) gt = downsample_mask(gt, factor);
      Tensor loss = bce_loss(pred, gt, opts.pos_weight);
      loss.backward();
      loss_sum += loss.val();
      opt.step(params);
    }
    Scalar mean_loss = loss_sum / (Scalar)train_set.size();
    result.epoch_losses.push_back(mean_loss);
    sched.observe(mean_loss, opt);
    if (opts.on_epoch) opts.on_epoch(epoch, mean_loss, opt.lr());
  }
  return result;
}

inline Vocabulary build_vocabulary(const std::vector<Example>& train_set) {
  Vocabulary v;
  for (const auto& ex : train_set) v.add_query(ex.query);
  return v;
}

}  // namespace dmn
