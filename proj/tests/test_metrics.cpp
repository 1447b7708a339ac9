#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dmn/metrics.hpp"
#include "dmn/train.hpp"

using namespace dmn;

namespace {

// Independent pixel-counting oracle.
std::pair<long, long> count_iu(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
  long inter = 0, uni = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] && b[i]);
    uni += (a[i] || b[i]);
  }
  return {inter, uni};
}

std::vector<uint8_t> random_mask(Rng& rng, int n) {
  std::vector<uint8_t> m(n);
  for (auto& v : m) v = (uint8_t)rng.uniform_int(0, 1);
  return m;
}

}  // namespace

TEST_CASE("perfect predictions give mIoU 1 and full Pr@X") {
  Rng rng(1);
  std::vector<std::vector<uint8_t>> preds, gts;
  for (int e = 0; e < 5; ++e) {
    auto m = random_mask(rng, 64);
    m[0] = 1;  // nonempty
    preds.push_back(m);
    gts.push_back(m);
  }
  auto rep = evaluate_masks(preds, gts);
  CHECK(rep.miou == doctest::Approx(1.0));
  for (auto p : rep.pr) CHECK(p == doctest::Approx(100.0));
}

TEST_CASE("cumulative mIoU is not the mean of per-image IoU") {
  // (I,U) = (1,2) and (3,4) -> 4/6
  std::vector<std::vector<uint8_t>> preds = {{1, 1, 0, 0}, {1, 1, 1, 1}};
  std::vector<std::vector<uint8_t>> gts = {{1, 0, 1, 0}, {1, 1, 1, 0}};
  auto rep = evaluate_masks(preds, gts);
  CHECK(rep.per_example_iou[0] == doctest::Approx(1.0 / 3.0));  // I=1,U=3
  // adjust to the worked case: build masks with exactly (1,2) and (3,4)
  preds = {{1, 0, 0, 0}, {1, 1, 1, 0}};
  gts = {{1, 1, 0, 0}, {1, 1, 1, 1}};
  rep = evaluate_masks(preds, gts);
  CHECK(rep.miou == doctest::Approx(4.0 / 6.0));
  CHECK(rep.mean_iou == doctest::Approx((0.5 + 0.75) / 2.0));
}

TEST_CASE("Pr@X counts IoU at or above each level") {
  // per-example IoUs 0.4, 0.6, 0.55
  std::vector<std::vector<uint8_t>> preds, gts;
  auto make_pair = [&](int inter, int uni) {
    std::vector<uint8_t> p(20, 0), g(20, 0);
    for (int i = 0; i < uni; ++i) p[i] = 1;
    for (int i = uni - inter; i < uni - inter + inter; ++i) g[i] = 1;
    // g subset of p: I=inter, U=uni
    preds.push_back(p);
    gts.push_back(g);
  };
  make_pair(4, 10);   // 0.4
  make_pair(6, 10);   // 0.6
  make_pair(11, 20);  // 0.55
  auto rep = evaluate_masks(preds, gts);
  CHECK(rep.per_example_iou[2] == doctest::Approx(0.55));
  CHECK(rep.pr[0] == doctest::Approx(100.0 * 2 / 3));  // Pr@0.5: 0.6 and 0.55
  CHECK(rep.pr[1] == doctest::Approx(100.0 * 1 / 3));  // Pr@0.6: only 0.6
  for (size_t l = 1; l < kPrLevels.size(); ++l) CHECK(rep.pr[l] <= rep.pr[l - 1]);
}

TEST_CASE("empty-empty pairs are excluded from the cumulative sums") {
  std::vector<std::vector<uint8_t>> preds = {{0, 0, 0, 0}, {1, 1, 0, 0}};
  std::vector<std::vector<uint8_t>> gts = {{0, 0, 0, 0}, {1, 0, 0, 0}};
  auto rep = evaluate_masks(preds, gts);
  CHECK(rep.miou == doctest::Approx(0.5));
  CHECK(rep.per_example_iou[0] == doctest::Approx(1.0));
}

TEST_CASE("evaluate matches the pixel-count oracle on 100 random 8x8 pairs") {
  Rng rng(2);
  std::vector<std::vector<uint8_t>> preds, gts;
  long ti = 0, tu = 0;
  for (int e = 0; e < 100; ++e) {
    preds.push_back(random_mask(rng, 64));
    gts.push_back(random_mask(rng, 64));
    auto [i, u] = count_iu(preds.back(), gts.back());
    if (u > 0) {
      ti += i;
      tu += u;
    }
  }
  auto rep = evaluate_masks(preds, gts);
  CHECK(rep.miou == doctest::Approx((Scalar)ti / (Scalar)tu).epsilon(1e-15));
  for (int e = 0; e < 100; ++e) {
    auto [i, u] = count_iu(preds[e], gts[e]);
    Scalar want = u == 0 ? 1.0 : (Scalar)i / u;
    CHECK(rep.per_example_iou[e] == doctest::Approx(want).epsilon(1e-15));
  }
}

TEST_CASE("empty dataset is rejected") {
  CHECK_THROWS_AS(evaluate_masks({}, {}), ContractViolation);
}

TEST_CASE("threshold calibration agrees with a brute-force sweep") {
  Rng rng(3);
  // synthetic heatmaps against masks; 5 examples
  std::vector<Tensor> heatmaps;
  std::vector<Example> dataset;
  for (int e = 0; e < 5; ++e) {
    Example ex;
    ex.h = 4;
    ex.w = 4;
    ex.mask = random_mask(rng, 16);
    ex.mask[0] = 1;
    heatmaps.push_back(random_tensor({1, 4, 4}, rng, 0.0, 1.0));
    dataset.push_back(ex);
  }
  Scalar theta = calibrate_threshold_heatmaps(heatmaps, dataset);

  Scalar best_theta = 0.01, best = -1;
  for (int k = 1; k <= 99; ++k) {
    Scalar t = 0.01 * k;
    std::vector<std::vector<uint8_t>> preds, gts;
    for (int e = 0; e < 5; ++e) {
      preds.push_back(binarize(heatmaps[e], t));
      gts.push_back(dataset[e].mask);
    }
    long ti = 0, tu = 0;
    for (int e = 0; e < 5; ++e) {
      auto [i, u] = count_iu(preds[e], gts[e]);
      if (u > 0) {
        ti += i;
        tu += u;
      }
    }
    Scalar miou = tu == 0 ? 0 : (Scalar)ti / tu;
    if (miou > best) {
      best = miou;
      best_theta = t;
    }
  }
  CHECK(theta == doctest::Approx(best_theta));

  // argmax dominates any fixed threshold
  CHECK(evaluate_heatmaps(heatmaps, dataset, theta).miou >=
        evaluate_heatmaps(heatmaps, dataset, 0.5).miou);
}

TEST_CASE("degenerate exact model calibrates to the smallest threshold") {
  std::vector<Tensor> heatmaps;
  std::vector<Example> dataset;
  Rng rng(4);
  for (int e = 0; e < 3; ++e) {
    Example ex;
    ex.h = 4;
    ex.w = 4;
    ex.mask = random_mask(rng, 16);
    ex.mask[3] = 1;
    std::vector<Scalar> hm(16);
    for (int i = 0; i < 16; ++i) hm[i] = ex.mask[i] ? 1.0 : 0.0;
    heatmaps.push_back(Tensor({1, 4, 4}, hm));
    dataset.push_back(ex);
  }
  CHECK(calibrate_threshold_heatmaps(heatmaps, dataset) == doctest::Approx(0.01));
}

TEST_CASE("mask downsampling is nearest neighbor and binary") {
  std::vector<Scalar> m(64, 0.0);
  for (int i = 0; i < 8; ++i)
    for (int j = 4; j < 8; ++j) m[i * 8 + j] = 1.0;  // right half set
  Tensor mask({1, 8, 8}, m);
  Tensor low = downsample_mask(mask, 4);
  CHECK(low.shape() == Shape{1, 2, 2});
  for (long i = 0; i < low.size(); ++i) CHECK((low.val(i) == 0.0 || low.val(i) == 1.0));
  CHECK(low.val(0) == 0.0);
  CHECK(low.val(1) == 1.0);
}
