#pragma once

#include <array>

#include "dmn/data.hpp"
#include "dmn/model.hpp"

namespace dmn {

inline const std::array<Scalar, 5> kPrLevels = {0.5, 0.6, 0.7, 0.8, 0.9};

struct EvalReport {
  Scalar miou = 0;       // cumulative: total intersection / total union
  Scalar mean_iou = 0;   // per-image mean, reported alongside for transparency
  std::array<Scalar, 5> pr{};  // Pr@{0.5..0.9}, percent, strict inequality
  Scalar threshold = 0.5;
  std::vector<Scalar> per_example_iou;
};

// Cumulative mIoU and Pr@X from binary mask pairs. Pairs with union 0 are
// excluded from the cumulative sums; their per-example IoU is taken as 1.
inline EvalReport evaluate_masks(const std::vector<std::vector<uint8_t>>& preds,
                                 const std::vector<std::vector<uint8_t>>& gts,
                                 Scalar threshold = 0.5) {
  check(!preds.empty(), "evaluate: empty dataset");
  check(preds.size() == gts.size(), "evaluate: prediction/ground-truth count mismatch");
  EvalReport rep;
  rep.threshold = threshold;
  long total_i = 0, total_u = 0;
  Scalar iou_sum = 0;
  for (size_t e = 0; e < preds.size(); ++e) {
    check(preds[e].size() == gts[e].size(), "evaluate: mask size mismatch at example " +
                                                std::to_string(e));
    long inter = 0, uni = 0;
    for (size_t p = 0; p < preds[e].size(); ++p) {
      bool a = preds[e][p] != 0, b = gts[e][p] != 0;
      inter += (a && b);
      uni += (a || b);
    }
    total_i += inter;
    total_u += uni;
    Scalar iou = uni == 0 ? 1.0 : (Scalar)inter / (Scalar)uni;
    rep.per_example_iou.push_back(iou);
    iou_sum += iou;
  }
  rep.miou = total_u == 0 ? 0.0 : (Scalar)total_i / (Scalar)total_u;
  rep.mean_iou = iou_sum / (Scalar)preds.size();
  for (size_t l = 0; l < kPrLevels.size(); ++l) {
    long n = 0;
    for (Scalar iou : rep.per_example_iou) n += (iou >= kPrLevels[l]);
    rep.pr[l] = 100.0 * (Scalar)n / (Scalar)preds.size();
  }
  return rep;
}

inline std::vector<Tensor> predict_heatmaps(const DmnModel& model,
                                            const std::vector<Example>& dataset) {
  check(!dataset.empty(), "evaluate: empty dataset");
  NoGradGuard ng;
  std::vector<Tensor> out;
  out.reserve(dataset.size());
  for (const auto& ex : dataset)
    out.push_back(model.forward(image_to_tensor(ex), model.vocab().encode(ex.query),
                                Stage::high_res));
  return out;
}

inline EvalReport evaluate_heatmaps(const std::vector<Tensor>& heatmaps,
                                    const std::vector<Example>& dataset, Scalar threshold) {
  std::vector<std::vector<uint8_t>> preds, gts;
  for (size_t e = 0; e < dataset.size(); ++e) {
    preds.push_back(binarize(heatmaps[e], threshold));
    gts.push_back(dataset[e].mask);
  }
  return evaluate_masks(preds, gts, threshold);
}

inline EvalReport evaluate(const DmnModel& model, const std::vector<Example>& dataset,
                           Scalar threshold) {
  return evaluate_heatmaps(predict_heatmaps(model, dataset), dataset, threshold);
}

// Sweeps theta over {0.01..0.99}, maximizing cumulative mIoU; ties take the
// smallest theta.
inline Scalar calibrate_threshold_heatmaps(const std::vector<Tensor>& heatmaps,
                                           const std::vector<Example>& dataset) {
  check(!dataset.empty(), "calibrate_threshold: empty split");
  Scalar best_theta = 0.01, best_miou = -1;
  for (int k = 1; k <= 99; ++k) {
    Scalar theta = 0.01 * k;
    Scalar miou = evaluate_heatmaps(heatmaps, dataset, theta).miou;
    if (miou > best_miou) {
      best_miou = miou;
      best_theta = theta;
    }
  }
  return best_theta;
}

inline Scalar calibrate_threshold(const DmnModel& model, const std::vector<Example>& split) {
  return calibrate_threshold_heatmaps(predict_heatmaps(model, split), split);
}

}  // namespace dmn
