#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dmn/grad_check.hpp"
#include "dmn/ops.hpp"
#include "dmn/optim.hpp"
#include "dmn/random.hpp"

using namespace dmn;

namespace {

// Quadruple-loop convolution oracle, independent of the autodiff path.
std::vector<Scalar> conv2d_oracle(const std::vector<Scalar>& x, int c_in, int h, int w,
                                  const std::vector<Scalar>& k, int c_out, int kh, int kw,
                                  const std::vector<Scalar>& bias, int stride, int pad) {
  int oh = (h + 2 * pad - kh) / stride + 1;
  int ow = (w + 2 * pad - kw) / stride + 1;
  std::vector<Scalar> out((size_t)c_out * oh * ow, 0.0);
  for (int co = 0; co < c_out; ++co)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        Scalar acc = bias.empty() ? 0.0 : bias[co];
        for (int ci = 0; ci < c_in; ++ci)
          for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
              int iy = oy * stride + ky - pad;
              int ix = ox * stride + kx - pad;
              Scalar xv = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                              ? x[((size_t)ci * h + iy) * w + ix]
                              : 0.0;
              acc += k[((((size_t)co * c_in) + ci) * kh + ky) * kw + kx] * xv;
            }
        out[((size_t)co * oh + oy) * ow + ox] = acc;
      }
  return out;
}

}  // namespace

TEST_CASE("conv2d identity kernel") {
  Tensor x({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor k({1, 1, 1, 1}, {1.0});
  Tensor b({1}, {0.0});
  Tensor y = conv2d(x, k, b, 1, 0);
  CHECK(y.shape() == Shape{1, 3, 3});
  for (int i = 0; i < 9; ++i) CHECK(y.val(i) == doctest::Approx(x.val(i)));
}

TEST_CASE("conv2d summation case") {
  Tensor x({1, 2, 2}, {1, 2, 3, 4});
  Tensor k({1, 1, 2, 2}, {1, 1, 1, 1});
  Tensor y = conv2d(x, k, Tensor(), 1, 0);
  CHECK(y.shape() == Shape{1, 1, 1});
  CHECK(y.val(0) == doctest::Approx(10.0));
}

TEST_CASE("conv2d matches quadruple-loop oracle") {
  Rng rng(42);
  Tensor x = random_tensor({2, 5, 5}, rng);
  Tensor k = random_tensor({3, 2, 3, 3}, rng);
  Tensor b = random_tensor({3}, rng);
  Tensor y = conv2d(x, k, b, 2, 1);
  CHECK(y.shape() == Shape{3, 3, 3});
  auto expect = conv2d_oracle(x.data(), 2, 5, 5, k.data(), 3, 3, 3, b.data(), 2, 1);
  REQUIRE(expect.size() == (size_t)y.size());
  for (long i = 0; i < y.size(); ++i) CHECK(y.val(i) == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("conv2d shape law over stride/pad grid") {
  Rng rng(7);
  for (int stride : {1, 2})
    for (int pad : {0, 1}) {
      int h = 4 + rng.uniform_int(0, 3), w = 4 + rng.uniform_int(0, 3);
      Tensor x = random_tensor({2, h, w}, rng);
      Tensor k = random_tensor({3, 2, 3, 3}, rng);
      Tensor y = conv2d(x, k, Tensor(), stride, pad);
      CHECK(y.dim(1) == (h + 2 * pad - 3) / stride + 1);
      CHECK(y.dim(2) == (w + 2 * pad - 3) / stride + 1);
    }
}

TEST_CASE("conv2d rejects bad shapes with dimension names") {
  Rng rng(1);
  Tensor x = random_tensor({2, 4, 4}, rng);
  Tensor k_big = random_tensor({1, 2, 5, 5}, rng);
  CHECK_THROWS_WITH_AS(conv2d(x, k_big, Tensor(), 1, 0), doctest::Contains("height"),
                       ContractViolation);
  Tensor k_chan = random_tensor({1, 3, 3, 3}, rng);
  CHECK_THROWS_WITH_AS(conv2d(x, k_chan, Tensor(), 1, 0),
                       doctest::Contains("channels"), ContractViolation);
}

TEST_CASE("bilinear upsample preserves constants") {
  Tensor x = Tensor::full({2, 3, 4}, 7.0);
  Tensor y = bilinear_upsample_x2(x);
  CHECK(y.shape() == Shape{2, 6, 8});
  for (long i = 0; i < y.size(); ++i) CHECK(y.val(i) == doctest::Approx(7.0));
}

TEST_CASE("bilinear upsample hand-evaluated row") {
  Tensor x({1, 1, 2}, {1, 3});
  Tensor y = bilinear_upsample_x2(x);
  CHECK(y.shape() == Shape{1, 2, 4});
  std::vector<Scalar> want = {1, 1.5, 2.5, 3};
  for (int i = 0; i < 4; ++i) CHECK(y.val(i) == doctest::Approx(want[i]));
}

TEST_CASE("bilinear upsample separable 2x2 case") {
  Tensor x({1, 2, 2}, {1, 3, 5, 7});
  Tensor y = bilinear_upsample_x2(x);
  CHECK(y.shape() == Shape{1, 4, 4});
  std::vector<Scalar> first_row = {1, 1.5, 2.5, 3};
  std::vector<Scalar> first_col = {1, 2, 4, 5};
  for (int i = 0; i < 4; ++i) {
    CHECK(y.val(i) == doctest::Approx(first_row[i]));
    CHECK(y.val(i * 4) == doctest::Approx(first_col[i]));
  }
}

TEST_CASE("bilinear upsample monotone on monotone rows") {
  Rng rng(11);
  std::vector<Scalar> vals(8);
  Scalar acc = 0;
  for (auto& v : vals) {
    acc += rng.uniform(0.0, 1.0);
    v = acc;
  }
  Tensor x({1, 1, 8}, vals);
  Tensor y = bilinear_upsample_x2(x);
  for (int i = 1; i < 16; ++i) CHECK(y.val(i) >= y.val(i - 1));
}

TEST_CASE("affine identity and hand case") {
  Tensor x({3}, {1, 2, 3});
  Tensor id({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor zero({3}, {0, 0, 0});
  Tensor y = affine(x, id, zero);
  for (int i = 0; i < 3; ++i) CHECK(y.val(i) == doctest::Approx(x.val(i)));

  Tensor x2({2}, {1, 2});
  Tensor W({1, 2}, {1, 1});
  Tensor b({1}, {0.5});
  CHECK(affine(x2, W, b).val(0) == doctest::Approx(3.5));

  CHECK_THROWS_AS(affine(x2, id, zero), ContractViolation);
}

TEST_CASE("affine matches nested-loop oracle") {
  Rng rng(3);
  Tensor x = random_tensor({8}, rng);
  Tensor W = random_tensor({4, 8}, rng);
  Tensor b = random_tensor({4}, rng);
  Tensor y = affine(x, W, b);
  for (int o = 0; o < 4; ++o) {
    Scalar acc = b.val(o);
    for (int i = 0; i < 8; ++i) acc += W.val(o * 8 + i) * x.val(i);
    CHECK(y.val(o) == doctest::Approx(acc).epsilon(1e-14));
  }
}

TEST_CASE("adam zero gradient is a fixed point") {
  Tensor p({3}, {1, 2, 3}, true);
  p.grad();  // all zeros
  Adam opt({.lr = 0.1});
  opt.step({{"p", p}});
  CHECK(opt.step_count() == 1);
  CHECK(p.val(0) == doctest::Approx(1.0));
  CHECK(p.val(1) == doctest::Approx(2.0));
  CHECK(p.val(2) == doctest::Approx(3.0));
}

TEST_CASE("adam first step magnitude equals lr") {
  Tensor p({1}, {0.0}, true);
  p.grad()[0] = 1.0;
  Scalar lr = 0.01;
  Adam opt({.lr = lr});
  opt.step({{"p", p}});
  // bias-corrected m_hat = v_hat = 1 on step one
  CHECK(std::abs(p.val(0) + lr) < lr * 1e-6);
}

TEST_CASE("adam with lr=0 is the identity") {
  Rng rng(5);
  Tensor p = random_tensor({10}, rng, -1, 1, true);
  std::vector<Scalar> before = p.data();
  for (size_t i = 0; i < p.grad().size(); ++i) p.grad()[i] = rng.uniform(-1, 1);
  Adam opt({.lr = 0.0});
  opt.step({{"p", p}});
  CHECK(p.data() == before);
}

TEST_CASE("adam reports missing gradient by name") {
  Tensor p({2}, {0, 0}, true);
  Adam opt;
  CHECK_THROWS_WITH_AS(opt.step({{"weights.W", p}}), doctest::Contains("weights.W"),
                       ContractViolation);
}

TEST_CASE("plateau scheduler halts stagnation") {
  Adam opt({.lr = 1e-3});
  PlateauScheduler sched(2, 10.0);
  CHECK(!sched.observe(5.0, opt));
  CHECK(!sched.observe(5.0, opt));
  CHECK(sched.observe(5.0, opt));
  CHECK(opt.lr() == doctest::Approx(1e-4));
  // improvement resets the counter
  CHECK(!sched.observe(4.0, opt));
  CHECK(!sched.observe(4.0, opt));
  CHECK(sched.observe(4.0, opt));
  CHECK(opt.lr() == doctest::Approx(1e-5));
}

TEST_CASE("grad_check on sum is exact") {
  Rng rng(9);
  Tensor x = random_tensor({6}, rng);
  Scalar err = grad_check([&] { return sum(x); }, {x});
  CHECK(err < 1e-9);
}

TEST_CASE("grad_check on sum(sigmoid(x))") {
  Rng rng(10);
  Tensor x = random_tensor({12}, rng, -2, 2);
  Scalar err = grad_check([&] { return sum(sigmoid(x)); }, {x});
  CHECK(err <= 1e-6);
}

TEST_CASE("primitive ops pass grad_check across shapes") {
  Rng rng(20);
  for (Shape s : {Shape{1, 3, 3}, Shape{2, 4, 5}, Shape{3, 5, 4}}) {
    Tensor x = random_tensor(s, rng);
    Tensor k = random_tensor({2, s[0], 3, 3}, rng);
    Tensor b = random_tensor({2}, rng);
    CHECK(grad_check([&] { return sum(conv2d(x, k, b, 1, 1)); }, {x, k, b}) <= 1e-4);
    CHECK(grad_check([&] { return sum(bilinear_upsample_x2(x)); }, {x}) <= 1e-4);
    Tensor y = random_tensor(s, rng);
    CHECK(grad_check([&] { return sum(mul(sigmoid(x), y)); }, {x, y}) <= 1e-4);
    CHECK(grad_check([&] { return sum(mul(concat({x, y}), concat({y, x}))); }, {x, y}) <= 1e-4);
  }
  for (int d_in : {3, 5, 8}) {
    Tensor x = random_tensor({d_in}, rng);
    Tensor W = random_tensor({4, d_in}, rng);
    Tensor b = random_tensor({4}, rng);
    CHECK(grad_check([&] { return sum(sigmoid(affine(x, W, b))); }, {x, W, b}) <= 1e-4);
  }
}

TEST_CASE("gradient accumulates across reuse of a tensor") {
  Tensor x({2}, {1.0, 2.0}, true);
  Tensor y = add(mul(x, x), x);  // d/dx = 2x + 1
  sum(y).backward();
  CHECK(x.grad()[0] == doctest::Approx(3.0));
  CHECK(x.grad()[1] == doctest::Approx(5.0));
}

TEST_CASE("bce loss closed forms and oracle") {
  Tensor gt({1, 2, 2}, {1, 0, 1, 0});
  Tensor near({1, 2, 2}, {1 - 1e-9, 1e-9, 1 - 1e-9, 1e-9});
  CHECK(bce_loss(near, gt).val() == doctest::Approx(0.0).epsilon(1e-6));

  Tensor half = Tensor::full({1, 2, 2}, 0.5);
  CHECK(bce_loss(half, gt).val() == doctest::Approx(std::log(2.0)));

  Rng rng(31);
  Tensor pred = random_tensor({1, 4, 4}, rng, 0.05, 0.95);
  std::vector<Scalar> gtv(16);
  for (auto& t : gtv) t = rng.uniform_int(0, 1);
  Tensor gt2({1, 4, 4}, gtv);
  Scalar pw = 2.5;
  Scalar want = 0;
  for (int i = 0; i < 16; ++i)
    want -= pw * gtv[i] * std::log(pred.val(i)) + (1 - gtv[i]) * std::log(1 - pred.val(i));
  want /= 16;
  CHECK(bce_loss(pred, gt2, pw).val() == doctest::Approx(want).epsilon(1e-12));

  Tensor small = Tensor::full({1, 1, 1}, 0.5);
  CHECK_THROWS_WITH_AS(bce_loss(small, gt), doctest::Contains("downsample"), ContractViolation);

  CHECK(grad_check([&] { return bce_loss(sigmoid(pred), gt2, pw); }, {pred}) <= 1e-4);
}
