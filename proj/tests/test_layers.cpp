#include <cmath>

#include "doctest.h"

#include "blcl/layers.hpp"
#include "blcl/rng.hpp"

using namespace blcl;

namespace {

Tensor4 random_tensor(Rng& rng, int n, int c, int h, int w) {
  Tensor4 t(n, c, h, w);
  for (auto& v : t.v) v = static_cast<float>(rng.normal(0.0, 1.0));
  return t;
}

// scalar objective: weighted sum of the output, with fixed random weights, so
// analytic input/parameter gradients can be checked by central differences
struct Probe {
  std::vector<float> weights;

  explicit Probe(std::size_t n, Rng& rng) {
    weights.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      weights.push_back(static_cast<float>(rng.normal(0.0, 1.0)));
  }
  double value(const Tensor4& y) const {
    double s = 0;
    for (std::size_t i = 0; i < y.v.size(); ++i) s += weights[i] * y.v[i];
    return s;
  }
  Tensor4 grad(const Tensor4& like) const {
    Tensor4 g(like.n, like.c, like.h, like.w);
    g.v.assign(weights.begin(), weights.end());
    return g;
  }
};

}  // namespace

TEST_CASE("conv2d forward matches a naive convolution") {
  Rng rng(1);
  nn::Conv2d conv(2, 3, 3, 2, 1);
  conv.init(rng);
  Tensor4 x = random_tensor(rng, 2, 2, 5, 5);
  Tensor4 y = conv.forward(x, false);
  REQUIRE(y.c == 3);
  REQUIRE(y.h == 3);
  REQUIRE(y.w == 3);

  for (int n = 0; n < 2; ++n)
    for (int oc = 0; oc < 3; ++oc)
      for (int oy = 0; oy < 3; ++oy)
        for (int ox = 0; ox < 3; ++ox) {
          double acc = 0;
          for (int ic = 0; ic < 2; ++ic)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int iy = oy * 2 - 1 + ky;
                const int ix = ox * 2 - 1 + kx;
                if (iy < 0 || iy >= 5 || ix < 0 || ix >= 5) continue;
                acc += conv.w[((oc * 2 + ic) * 3 + ky) * 3 + kx] *
                       x.at(n, ic, iy, ix);
              }
          CHECK(y.at(n, oc, oy, ox) == doctest::Approx(acc).epsilon(1e-4));
        }
}

TEST_CASE("conv2d gradients match central differences") {
  Rng rng(2);
  nn::Conv2d conv(2, 2, 3, 1, 1);
  conv.init(rng);
  Tensor4 x = random_tensor(rng, 1, 2, 4, 4);
  Probe probe(1 * 2 * 4 * 4, rng);

  Tensor4 y = conv.forward(x, true);
  Tensor4 dx = conv.backward(probe.grad(y));

  const float eps = 1e-3f;
  for (std::size_t i = 0; i < x.v.size(); i += 3) {
    Tensor4 xp = x, xm = x;
    xp.v[i] += eps;
    xm.v[i] -= eps;
    const double fd =
        (probe.value(conv.forward(xp, false)) - probe.value(conv.forward(xm, false))) /
        (2 * eps);
    CHECK(dx.v[i] == doctest::Approx(fd).epsilon(2e-2));
  }
  for (std::size_t i = 0; i < conv.w.size(); i += 5) {
    nn::Conv2d cp = conv, cm = conv;
    cp.w[i] += eps;
    cm.w[i] -= eps;
    const double fd =
        (probe.value(cp.forward(x, false)) - probe.value(cm.forward(x, false))) /
        (2 * eps);
    CHECK(conv.dw[i] == doctest::Approx(fd).epsilon(2e-2));
  }
}

TEST_CASE("batchnorm statistics and gradients") {
  Rng rng(3);
  nn::BatchNorm2d bn(3);
  Tensor4 x = random_tensor(rng, 4, 3, 2, 2);

  SUBCASE("train output is normalized per channel") {
    Tensor4 y = bn.forward(x, true);
    const std::size_t plane = 4;
    for (int c = 0; c < 3; ++c) {
      double sum = 0, sq = 0;
      for (int n = 0; n < 4; ++n)
        for (std::size_t i = 0; i < plane; ++i) {
          const float v = y.v[(n * 3 + c) * plane + i];
          sum += v;
          sq += v * v;
        }
      const double m = sum / 16, var = sq / 16 - m * m;
      CHECK(m == doctest::Approx(0.0).epsilon(1e-4));
      CHECK(var == doctest::Approx(1.0).epsilon(1e-2));
    }
  }
  SUBCASE("eval mode uses running stats and is per-sample deterministic") {
    for (int rep = 0; rep < 10; ++rep) bn.forward(x, true);
    Tensor4 a = bn.forward(x, false);
    Tensor4 b = bn.forward(x, false);
    CHECK(a.v == b.v);
  }
  SUBCASE("train-mode gradients match central differences") {
    nn::BatchNorm2d bn2(2);
    bn2.gamma = {1.3f, 0.7f};
    bn2.beta = {0.1f, -0.2f};
    Tensor4 xs = random_tensor(rng, 3, 2, 2, 2);
    Probe probe(3 * 2 * 2 * 2, rng);
    Tensor4 y = bn2.forward(xs, true);
    Tensor4 dx = bn2.backward(probe.grad(y));

    const float eps = 1e-3f;
    for (std::size_t i = 0; i < xs.v.size(); i += 2) {
      Tensor4 xp = xs, xm = xs;
      xp.v[i] += eps;
      xm.v[i] -= eps;
      nn::BatchNorm2d b1 = bn2, b2 = bn2;
      const double fd =
          (probe.value(b1.forward(xp, true)) - probe.value(b2.forward(xm, true))) /
          (2 * eps);
      CHECK(dx.v[i] == doctest::Approx(fd).epsilon(5e-2));
    }
    // gamma/beta grads
    for (int c = 0; c < 2; ++c) {
      nn::BatchNorm2d bp = bn2, bm = bn2;
      bp.gamma[c] += eps;
      bm.gamma[c] -= eps;
      const double fd =
          (probe.value(bp.forward(xs, true)) - probe.value(bm.forward(xs, true))) /
          (2 * eps);
      CHECK(bn2.dgamma[c] == doctest::Approx(fd).epsilon(2e-2));
    }
  }
}

TEST_CASE("linear layer") {
  Rng rng(4);
  nn::Linear lin(5, 3);
  lin.init(rng);
  Mat2 x(2, 5);
  for (auto& v : x.v) v = static_cast<float>(rng.normal(0.0, 1.0));

  Mat2 y = lin.forward(x, true);
  REQUIRE(y.rows == 2);
  REQUIRE(y.cols == 3);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) {
      double acc = lin.b[c];
      for (int i = 0; i < 5; ++i) acc += lin.w[c * 5 + i] * x.at(r, i);
      CHECK(y.at(r, c) == doctest::Approx(acc).epsilon(1e-5));
    }

  Mat2 dy(2, 3);
  for (auto& v : dy.v) v = static_cast<float>(rng.normal(0.0, 1.0));
  Mat2 dx = lin.backward(dy);
  for (int r = 0; r < 2; ++r)
    for (int i = 0; i < 5; ++i) {
      double acc = 0;
      for (int c = 0; c < 3; ++c) acc += dy.at(r, c) * lin.w[c * 5 + i];
      CHECK(dx.at(r, i) == doctest::Approx(acc).epsilon(1e-5));
    }
  for (int c = 0; c < 3; ++c) {
    CHECK(lin.db[c] == doctest::Approx(dy.at(0, c) + dy.at(1, c)).epsilon(1e-5));
    for (int i = 0; i < 5; ++i)
      CHECK(lin.dw[c * 5 + i] ==
            doctest::Approx(dy.at(0, c) * x.at(0, i) + dy.at(1, c) * x.at(1, i))
                .epsilon(1e-4));
  }
}

TEST_CASE("global average pool") {
  Rng rng(5);
  Tensor4 x = random_tensor(rng, 2, 3, 4, 4);
  Mat2 y = nn::global_avg_pool(x);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c) {
      double s = 0;
      for (int i = 0; i < 16; ++i) s += x.v[(n * 3 + c) * 16 + i];
      CHECK(y.at(n, c) == doctest::Approx(s / 16).epsilon(1e-5));
    }
  Mat2 dy(2, 3);
  dy.at(0, 0) = 16.0f;
  Tensor4 dx = nn::global_avg_pool_backward(dy, 4, 4);
  CHECK(dx.at(0, 0, 2, 2) == doctest::Approx(1.0f));
  CHECK(dx.at(1, 2, 0, 0) == doctest::Approx(0.0f));
}

TEST_CASE("basic block end-to-end gradient") {
  Rng rng(6);
  for (int convs : {1, 2}) {
    nn::BasicBlock block(3, 4, 2, convs);
    block.init(rng);
    Tensor4 x = random_tensor(rng, 2, 3, 4, 4);
    Probe probe(2 * 4 * 2 * 2, rng);

    nn::BasicBlock fwd = block;
    Tensor4 y = fwd.forward(x, true);
    REQUIRE(y.c == 4);
    REQUIRE(y.h == 2);
    Tensor4 dx = fwd.backward(probe.grad(y));

    const float eps = 1e-3f;
    int checked = 0;
    for (std::size_t i = 0; i < x.v.size() && checked < 20; i += 7, ++checked) {
      Tensor4 xp = x, xm = x;
      xp.v[i] += eps;
      xm.v[i] -= eps;
      nn::BasicBlock b1 = block, b2 = block;
      const double fd =
          (probe.value(b1.forward(xp, true)) - probe.value(b2.forward(xm, true))) /
          (2 * eps);
      // relu kinks can bite individual probes; require agreement within 5%
      if (std::abs(fd) > 1e-3)
        CHECK(dx.v[i] == doctest::Approx(fd).epsilon(5e-2));
    }
  }
}
