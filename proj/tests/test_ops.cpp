#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "grasp/errors.hpp"
#include "grasp/ops.hpp"
#include "grasp/rng.hpp"
#include "grasp/tensor.hpp"
#include "testutil.hpp"

using namespace grasp;
using namespace testutil;

namespace {

struct ConvCase {
  int n, cin, h, w, cout, k, stride, pad;
  std::uint64_t seed;
};

const ConvCase kConvCases[] = {
    {1, 1, 4, 4, 1, 2, 2, 0, 1},  // minimal strided case
    {2, 3, 7, 6, 4, 3, 2, 1, 2},
    {1, 2, 8, 8, 3, 5, 2, 2, 3},  // backbone-like geometry
    {2, 2, 5, 5, 2, 1, 1, 0, 4},  // 1x1 head-like
    {1, 3, 9, 7, 2, 3, 3, 2, 5},
};

double dot(const std::vector<float>& a, const std::vector<float>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

}  // namespace

TEST_CASE("conv2d output geometry") {
  Tensor in({1, 3, 128, 128}, 0.1f);
  Tensor k({8, 3, 5, 5}, 0.01f);
  Tensor b({8}, 0.0f);
  Tensor out = conv2d_forward(in, k, b, 2, 2);
  CHECK(out.shape == std::vector<int>{1, 8, 64, 64});
}

TEST_CASE("conv2d zero input passes bias through") {
  Tensor in({2, 3, 10, 10}, 0.0f);
  Rng rng(11);
  Tensor k = rand_tensor({4, 3, 5, 5}, rng);
  Tensor b({4});
  b.data = {0.5f, -1.0f, 0.25f, 2.0f};
  Tensor out = conv2d_forward(in, k, b, 2, 2);
  for (int n = 0; n < 2; ++n)
    for (int oc = 0; oc < 4; ++oc)
      for (int i = 0; i < 25; ++i)
        CHECK(out.data[(n * 4 + oc) * 25 + i] == b.data[oc]);
}

TEST_CASE("conv2d 3x3 all-ones kernel sums the input") {
  Tensor in({1, 1, 3, 3});
  in.data = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  Tensor k({1, 1, 3, 3}, 1.0f);
  Tensor b({1}, 0.0f);
  Tensor out = conv2d_forward(in, k, b, 1, 0);
  REQUIRE(out.shape == std::vector<int>{1, 1, 1, 1});
  CHECK(out.data[0] == 45.0f);
}

TEST_CASE("conv2d rejects bad shapes") {
  Tensor in({1, 3, 8, 8}, 0.0f);
  Tensor k({4, 2, 5, 5}, 0.0f);  // Cin mismatch
  Tensor b({4}, 0.0f);
  CHECK_THROWS_AS(conv2d_forward(in, k, b, 2, 2), ShapeError);
  Tensor k2({4, 3, 5, 3}, 0.0f);  // not square
  CHECK_THROWS_AS(conv2d_forward(in, k2, b, 2, 2), ShapeError);
  Tensor k3({4, 3, 5, 5}, 0.0f);
  Tensor b3({5}, 0.0f);  // bias length
  CHECK_THROWS_AS(conv2d_forward(in, k3, b3, 2, 2), ShapeError);
  CHECK_THROWS_AS(conv2d_forward(in, k3, b, 0, 2), ShapeError);   // stride
  CHECK_THROWS_AS(conv2d_forward(in, k3, b, 2, -1), ShapeError);  // padding
  Tensor k4({4, 3, 11, 11}, 0.0f);  // kernel larger than padded input
  Tensor b4({4}, 0.0f);
  CHECK_THROWS_AS(conv2d_forward(in, k4, b4, 1, 0), ShapeError);
}

TEST_CASE("conv2d is linear in the input when bias is zero") {
  Rng rng(21);
  Tensor in = rand_tensor({2, 3, 9, 9}, rng);
  Tensor k = rand_tensor({4, 3, 3, 3}, rng);
  Tensor b({4}, 0.0f);
  Tensor scaled = in;
  for (auto& v : scaled.data) v *= 3.25f;
  Tensor a = conv2d_forward(scaled, k, b, 2, 1);
  Tensor c = conv2d_forward(in, k, b, 2, 1);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.data[i] == doctest::Approx(3.25f * c.data[i]).epsilon(1e-5));
  }
}

TEST_CASE("conv2d gradients match 64-bit finite differences") {
  for (const ConvCase& c : kConvCases) {
    CAPTURE(c.seed);
    Rng rng(c.seed);
    Tensor x = rand_tensor({c.n, c.cin, c.h, c.w}, rng);
    Tensor w = rand_tensor({c.cout, c.cin, c.k, c.k}, rng);
    Tensor b = rand_tensor({c.cout}, rng);
    Tensor y = conv2d_forward(x, w, b, c.stride, c.pad);
    Tensor cot = rand_tensor(y.shape, rng);
    ConvGrads g = conv2d_backward(cot, x, w, c.stride, c.pad);

    const ConvRefDims d =
        conv_ref_dims(c.n, c.cin, c.h, c.w, c.cout, c.k, c.stride, c.pad);
    const dvec xd = to_dvec(x), wd = to_dvec(w), bd = to_dvec(b),
               cd = to_dvec(cot);
    dvec fx = fd_grad(xd, cd, [&](const dvec& v) { return ref_conv2d(v, wd, bd, d); });
    dvec fw = fd_grad(wd, cd, [&](const dvec& v) { return ref_conv2d(xd, v, bd, d); });
    dvec fb = fd_grad(bd, cd, [&](const dvec& v) { return ref_conv2d(xd, wd, v, d); });
    CHECK(max_rel_err(g.input, fx) < 1e-3);
    CHECK(max_rel_err(g.kernel, fw) < 1e-3);
    CHECK(max_rel_err(g.bias, fb) < 1e-3);
  }
}

TEST_CASE("conv2d adjoint identities") {
  // <conv(x;w,0), g> must equal both <x, grad_input> and <w, grad_kernel>.
  Rng rng(31);
  Tensor x = rand_tensor({2, 3, 8, 8}, rng);
  Tensor w = rand_tensor({4, 3, 5, 5}, rng);
  Tensor b({4}, 0.0f);
  Tensor y = conv2d_forward(x, w, b, 2, 2);
  Tensor g = rand_tensor(y.shape, rng);
  ConvGrads grads = conv2d_backward(g, x, w, 2, 2);
  const double yg = dot(y.data, g.data);
  CHECK(dot(x.data, grads.input.data) == doctest::Approx(yg).epsilon(1e-4));
  CHECK(dot(w.data, grads.kernel.data) == doctest::Approx(yg).epsilon(1e-4));
}

TEST_CASE("conv2d zero cotangent gives zero gradients") {
  Rng rng(41);
  Tensor x = rand_tensor({1, 2, 6, 6}, rng);
  Tensor w = rand_tensor({3, 2, 3, 3}, rng);
  Tensor g({1, 3, 3, 3}, 0.0f);
  ConvGrads grads = conv2d_backward(g, x, w, 2, 1);
  for (float v : grads.input.data) CHECK(v == 0.0f);
  for (float v : grads.kernel.data) CHECK(v == 0.0f);
  for (float v : grads.bias.data) CHECK(v == 0.0f);
}

TEST_CASE("conv2d grad_bias sums grad_out per channel") {
  Rng rng(51);
  Tensor x = rand_tensor({2, 2, 6, 6}, rng);
  Tensor w = rand_tensor({3, 2, 3, 3}, rng);
  Tensor g = rand_tensor({2, 3, 3, 3}, rng);
  ConvGrads grads = conv2d_backward(g, x, w, 2, 1);
  for (int oc = 0; oc < 3; ++oc) {
    double s = 0.0;
    for (int n = 0; n < 2; ++n)
      for (int i = 0; i < 9; ++i) s += g.data[(n * 3 + oc) * 9 + i];
    CHECK(grads.bias.data[oc] == doctest::Approx(s).epsilon(1e-5));
  }
}

TEST_CASE("conv2d_backward can skip grad_input") {
  Rng rng(61);
  Tensor x = rand_tensor({1, 3, 8, 8}, rng);
  Tensor w = rand_tensor({8, 3, 5, 5}, rng);
  Tensor g = rand_tensor({1, 8, 4, 4}, rng);
  ConvGrads with = conv2d_backward(g, x, w, 2, 2, true);
  ConvGrads without = conv2d_backward(g, x, w, 2, 2, false);
  CHECK(without.input.size() == 0);
  for (std::size_t i = 0; i < with.kernel.size(); ++i)
    CHECK(with.kernel.data[i] == without.kernel.data[i]);
  for (std::size_t i = 0; i < with.bias.size(); ++i)
    CHECK(with.bias.data[i] == without.bias.data[i]);
}

TEST_CASE("avgpool geometry and values") {
  Rng rng(71);
  Tensor in = rand_tensor({1, 16, 8, 8}, rng, 0.0f, 1.0f);
  Tensor out = avgpool_forward(in, 8, 8);
  REQUIRE(out.shape == std::vector<int>{1, 16, 1, 1});
  for (int c = 0; c < 16; ++c) {
    double mean = 0.0;
    for (int i = 0; i < 64; ++i) mean += in.data[c * 64 + i];
    mean /= 64.0;
    CHECK(out.data[c] == doctest::Approx(mean).epsilon(1e-5));
  }

  Tensor wide({1, 16, 40, 30}, 0.25f);
  Tensor wout = avgpool_forward(wide, 8, 1);
  CHECK(wout.shape == std::vector<int>{1, 16, 33, 23});
  for (float v : wout.data) CHECK(v == doctest::Approx(0.25f));

  CHECK_THROWS_AS(avgpool_forward(Tensor({1, 1, 4, 4}, 0.0f), 5, 1), ShapeError);
  CHECK_THROWS_AS(avgpool_forward(Tensor({1, 1, 4, 4}, 0.0f), 0, 1), ShapeError);
}

TEST_CASE("avgpool gradients match 64-bit finite differences") {
  struct PoolCase {
    int n, c, h, w, window, stride;
    std::uint64_t seed;
  };
  const PoolCase cases[] = {
      {2, 3, 6, 6, 2, 2, 1}, {1, 2, 8, 8, 8, 1, 2}, {1, 3, 9, 7, 3, 2, 3},
      {2, 1, 5, 5, 2, 1, 4}, {1, 4, 8, 6, 4, 2, 5},
  };
  for (const PoolCase& c : cases) {
    CAPTURE(c.seed);
    Rng rng(c.seed);
    Tensor x = rand_tensor({c.n, c.c, c.h, c.w}, rng);
    Tensor y = avgpool_forward(x, c.window, c.stride);
    Tensor cot = rand_tensor(y.shape, rng);
    Tensor g = avgpool_backward(cot, x.shape, c.window, c.stride);
    const dvec xd = to_dvec(x), cd = to_dvec(cot);
    dvec fd = fd_grad(xd, cd, [&](const dvec& v) {
      return ref_avgpool(v, c.n, c.c, c.h, c.w, c.window, c.stride);
    });
    CHECK(max_rel_err(g, fd) < 1e-3);
  }
}

TEST_CASE("relu values and gradient") {
  Tensor x({1, 1, 1, 4});
  x.data = {-1.0f, 2.5f, 0.0f, -0.75f};
  Tensor y = relu(x);
  CHECK(y.data[0] == 0.0f);
  CHECK(y.data[1] == 2.5f);
  CHECK(y.data[2] == 0.0f);
  CHECK(y.data[3] == 0.0f);

  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    // keep values away from the kink so finite differences are valid
    Tensor t({2, 3, 4, 4});
    for (auto& v : t.data) {
      do {
        v = rng.uniform(-1.0f, 1.0f);
      } while (std::abs(v) < 0.05f);
    }
    Tensor cot = rand_tensor(t.shape, rng);
    Tensor g = relu_backward(cot, t);
    dvec fd = fd_grad(to_dvec(t), to_dvec(cot),
                      [](const dvec& v) { return ref_relu(v); });
    CHECK(max_rel_err(g, fd) < 1e-3);
  }
}

TEST_CASE("sigmoid values, range, and gradient") {
  Tensor x({1, 1, 1, 3});
  x.data = {0.0f, 100.0f, -100.0f};
  Tensor y = sigmoid(x);
  CHECK(y.data[0] == 0.5f);
  CHECK(y.data[1] < 1.0f);  // strictly inside (0,1) even when saturated
  CHECK(y.data[1] > 0.999f);
  CHECK(y.data[2] > 0.0f);
  CHECK(y.data[2] < 0.001f);

  // sigma'(0) = 0.25
  Tensor one({1, 1, 1, 1}, 1.0f);
  Tensor zero({1, 1, 1, 1}, 0.0f);
  Tensor g0 = sigmoid_backward(one, sigmoid(zero));
  CHECK(g0.data[0] == doctest::Approx(0.25f));

  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed * 13);
    Tensor t = rand_tensor({2, 2, 3, 3}, rng, -3.0f, 3.0f);
    Tensor cot = rand_tensor(t.shape, rng);
    Tensor out = sigmoid(t);
    Tensor g = sigmoid_backward(cot, out);
    dvec fd = fd_grad(to_dvec(t), to_dvec(cot),
                      [](const dvec& v) { return ref_sigmoid(v); });
    CHECK(max_rel_err(g, fd) < 1e-3);
  }
}

TEST_CASE("bce matches hand-computed values") {
  Tensor p1({1}), t1({1});
  p1.data = {0.5f};
  t1.data = {1.0f};
  CHECK(bce_loss(p1, t1) == doctest::Approx(std::log(2.0)).epsilon(1e-6));

  Tensor p2({1}), t2({1});
  p2.data = {1.0f - 1e-7f};
  t2.data = {1.0f};
  CHECK(bce_loss(p2, t2) == doctest::Approx(1e-7).epsilon(0.5));

  Tensor p3({2}), t3({2});
  p3.data = {0.8f, 0.3f};
  t3.data = {1.0f, 0.0f};
  const double expect = (-std::log(0.8) - std::log(0.7)) / 2.0;
  CHECK(bce_loss(p3, t3) == doctest::Approx(expect).epsilon(1e-5));
  CHECK(bce_loss(p3, t3) == doctest::Approx(0.289907).epsilon(1e-4));
}

TEST_CASE("bce input validation") {
  Tensor p({2}), t({3});
  p.data = {0.5f, 0.5f};
  t.data = {1.0f, 0.0f, 1.0f};
  CHECK_THROWS_AS(bce_loss(p, t), ShapeError);
  CHECK_THROWS_AS(bce_backward(p, t), ShapeError);

  Tensor t2({2});
  t2.data = {1.0f, 0.5f};  // not a {0,1} label
  CHECK_THROWS_AS(bce_loss(p, t2), NumericError);

  Tensor pn({2});
  pn.data = {0.5f, std::numeric_limits<float>::quiet_NaN()};
  Tensor tn({2});
  tn.data = {1.0f, 0.0f};
  CHECK_THROWS_AS(bce_loss(pn, tn), NumericError);
}

TEST_CASE("bce gradient matches 64-bit finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed * 17);
    Tensor p({8});
    Tensor t({8});
    for (int i = 0; i < 8; ++i) {
      // midrange probabilities keep the h=1e-2 truncation error of the log
      // well under the 1e-3 gate
      p.data[i] = rng.uniform(0.3f, 0.7f);
      t.data[i] = rng.uniform() < 0.5f ? 0.0f : 1.0f;
    }
    Tensor g = bce_backward(p, t);
    const dvec td = to_dvec(t);
    dvec fd = fd_grad_scalar(to_dvec(p),
                             [&](const dvec& v) { return ref_bce(v, td); });
    CHECK(max_rel_err(g, fd) < 1e-3);
  }
}

TEST_CASE("tuned kernels agree bit-for-bit with the serial references") {
  struct EqCase {
    int n, cin, h, w, cout, k, stride, pad;
  };
  const EqCase cases[] = {
      {4, 3, 32, 32, 8, 5, 2, 2},  {2, 8, 16, 16, 8, 5, 2, 2},
      {2, 16, 8, 8, 16, 5, 2, 2},  {2, 16, 1, 1, 16, 1, 1, 0},
      {3, 5, 11, 9, 7, 3, 2, 1},   {1, 1, 6, 6, 1, 3, 1, 1},
  };
  std::uint64_t seed = 100;
  for (const EqCase& c : cases) {
    CAPTURE(seed);
    Rng rng(seed++);
    Tensor x = rand_tensor({c.n, c.cin, c.h, c.w}, rng);
    Tensor w = rand_tensor({c.cout, c.cin, c.k, c.k}, rng);
    Tensor b = rand_tensor({c.cout}, rng);
    Tensor a = conv2d_forward(x, w, b, c.stride, c.pad);
    Tensor s = serial::conv2d_forward(x, w, b, c.stride, c.pad);
    REQUIRE(a.shape == s.shape);
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a.data[i] == s.data[i]);

    Tensor g = rand_tensor(a.shape, rng);
    ConvGrads ga = conv2d_backward(g, x, w, c.stride, c.pad);
    ConvGrads gs = serial::conv2d_backward(g, x, w, c.stride, c.pad);
    for (std::size_t i = 0; i < ga.input.size(); ++i)
      REQUIRE(ga.input.data[i] == gs.input.data[i]);
    for (std::size_t i = 0; i < ga.kernel.size(); ++i)
      REQUIRE(ga.kernel.data[i] == gs.kernel.data[i]);
    for (std::size_t i = 0; i < ga.bias.size(); ++i)
      REQUIRE(ga.bias.data[i] == gs.bias.data[i]);
  }

  Rng rng(9);
  Tensor x = rand_tensor({3, 16, 12, 10}, rng);
  Tensor pa = avgpool_forward(x, 8, 1);
  Tensor ps = serial::avgpool_forward(x, 8, 1);
  for (std::size_t i = 0; i < pa.size(); ++i) REQUIRE(pa.data[i] == ps.data[i]);
  Tensor g = rand_tensor(pa.shape, rng);
  Tensor ba = avgpool_backward(g, x.shape, 8, 1);
  Tensor bs = serial::avgpool_backward(g, x.shape, 8, 1);
  for (std::size_t i = 0; i < ba.size(); ++i) REQUIRE(ba.data[i] == bs.data[i]);
}

TEST_CASE("conv2d is bit-deterministic across calls") {
  Rng rng(77);
  Tensor x = rand_tensor({2, 3, 16, 16}, rng);
  Tensor w = rand_tensor({8, 3, 5, 5}, rng);
  Tensor b = rand_tensor({8}, rng);
  Tensor a = conv2d_forward(x, w, b, 2, 2);
  Tensor c = conv2d_forward(x, w, b, 2, 2);
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a.data[i] == c.data[i]);
}
