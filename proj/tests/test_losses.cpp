#include <cmath>

#include "doctest.h"

#include "blcl/losses.hpp"
#include "blcl/rng.hpp"

using namespace blcl;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// independent oracle: enumerate every (i, j) pair by hand and sum the terms
double pair_enumeration_oracle(const MatrixXd& emb, const std::vector<int>& labels,
                               double margin) {
  const int bs = static_cast<int>(labels.size());
  double sum = 0.0;
  int count = 0;
  for (int i = 0; i < bs; ++i)
    for (int j = i; j < bs; ++j) {
      const VectorXd a = emb.row(i), b = emb.row(j);
      const double cd = 1.0 - a.dot(b) / (a.norm() * b.norm());
      if (labels[i] == labels[j])
        sum += cd;
      else
        sum += std::max(0.0, margin - cd);
      ++count;
    }
  return sum / count;
}

MatrixXd random_embeddings(Rng& rng, int rows, int cols) {
  MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.normal(0.0, 1.0);
  return m;
}

}  // namespace

TEST_CASE("cosine distance basics") {
  VectorXd x(3), y(3);
  x << 1, 2, 3;
  CHECK(loss::cosine_distance(x, x) == doctest::Approx(0.0));
  y << 3, -1.5, 0;  // orthogonal to x
  CHECK(loss::cosine_distance(x, y) == doctest::Approx(1.0));
  CHECK(loss::cosine_distance(x, VectorXd(-x)) == doctest::Approx(2.0));
  CHECK_THROWS_AS(loss::cosine_distance(x, VectorXd::Zero(3)),
                  std::invalid_argument);
}

TEST_CASE("form_pairs count and positivity") {
  SUBCASE("bs=2 distinct labels") {
    auto pairs = loss::form_pairs({0, 1});
    REQUIRE(pairs.size() == 3);
    int positives = 0;
    for (std::size_t p = 0; p < pairs.size(); ++p)
      if (pairs.is_positive[p]) ++positives;
    CHECK(positives == 2);  // the two self-pairs; (0,1) is negative
  }
  SUBCASE("bs=1 self pair") {
    auto pairs = loss::form_pairs({7});
    REQUIRE(pairs.size() == 1);
    CHECK(pairs.anchor_idx[0] == 0);
    CHECK(pairs.other_idx[0] == 0);
    CHECK(pairs.is_positive[0] == 1);
  }
  SUBCASE("bs=4 gives 10 pairs") {
    CHECK(loss::form_pairs({0, 1, 0, 2}).size() == 10);
  }
  SUBCASE("count identity and brute-force flags for bs in [1,64]") {
    Rng rng(11);
    for (int bs = 1; bs <= 64; ++bs) {
      std::vector<int> labels;
      for (int i = 0; i < bs; ++i) labels.push_back(rng.uniform_int(0, 4));
      auto pairs = loss::form_pairs(labels);
      REQUIRE(pairs.size() == static_cast<std::size_t>(bs) * (bs + 1) / 2);
      for (std::size_t p = 0; p < pairs.size(); ++p) {
        const bool expect =
            labels[pairs.anchor_idx[p]] == labels[pairs.other_idx[p]];
        CHECK(static_cast<bool>(pairs.is_positive[p]) == expect);
      }
    }
  }
}

TEST_CASE("contrastive loss against the pair-enumeration oracle") {
  SUBCASE("identical embeddings same label give zero") {
    MatrixXd emb(2, 4);
    emb << 1, 2, 3, 4, 1, 2, 3, 4;
    auto pairs = loss::form_pairs({3, 3});
    CHECK(loss::contrastive_loss(emb, pairs) == doctest::Approx(0.0));
  }
  SUBCASE("antipodal embeddings different labels give zero at margin 1") {
    MatrixXd emb(2, 3);
    emb << 1, 0, 2, -1, 0, -2;
    auto pairs = loss::form_pairs({0, 1});
    CHECK(loss::contrastive_loss(emb, pairs, 1.0) == doctest::Approx(0.0));
  }
  SUBCASE("hand-set 3-sample batch matches brute force") {
    MatrixXd emb(3, 2);
    emb << 1, 0, 0.6, 0.8, -0.5, 1.0;
    std::vector<int> labels{0, 0, 1};
    auto pairs = loss::form_pairs(labels);
    CHECK(loss::contrastive_loss(emb, pairs) ==
          doctest::Approx(pair_enumeration_oracle(emb, labels, 1.0)).epsilon(1e-9));
  }
  SUBCASE("50 random batches within 1e-6") {
    Rng rng(42);
    for (int trial = 0; trial < 50; ++trial) {
      const int bs = rng.uniform_int(2, 8);
      const int dim = rng.uniform_int(2, 16);
      MatrixXd emb = random_embeddings(rng, bs, dim);
      std::vector<int> labels;
      for (int i = 0; i < bs; ++i) labels.push_back(rng.uniform_int(0, 2));
      auto pairs = loss::form_pairs(labels);
      const double got = loss::contrastive_loss(emb, pairs);
      const double want = pair_enumeration_oracle(emb, labels, 1.0);
      CHECK(got == doctest::Approx(want).epsilon(1e-6));
      CHECK(got >= 0.0);
    }
  }
  SUBCASE("permutation invariance") {
    Rng rng(7);
    MatrixXd emb = random_embeddings(rng, 6, 8);
    std::vector<int> labels{0, 1, 0, 2, 1, 2};
    const double base = loss::contrastive_loss(emb, loss::form_pairs(labels));
    std::vector<int> perm{5, 3, 1, 0, 4, 2};
    MatrixXd emb2(6, 8);
    std::vector<int> labels2(6);
    for (int i = 0; i < 6; ++i) {
      emb2.row(i) = emb.row(perm[i]);
      labels2[i] = labels[perm[i]];
    }
    CHECK(loss::contrastive_loss(emb2, loss::form_pairs(labels2)) ==
          doctest::Approx(base).epsilon(1e-12));
  }
  SUBCASE("gradient matches central differences") {
    Rng rng(13);
    MatrixXd emb = random_embeddings(rng, 4, 5);
    std::vector<int> labels{0, 1, 0, 1};
    auto pairs = loss::form_pairs(labels);
    MatrixXd grad = loss::contrastive_loss_grad(emb, pairs);
    const double eps = 1e-6;
    for (int r = 0; r < emb.rows(); ++r)
      for (int c = 0; c < emb.cols(); ++c) {
        MatrixXd ep = emb, em = emb;
        ep(r, c) += eps;
        em(r, c) -= eps;
        const double fd = (loss::contrastive_loss(ep, pairs) -
                           loss::contrastive_loss(em, pairs)) /
                          (2 * eps);
        CHECK(grad(r, c) == doctest::Approx(fd).epsilon(1e-4));
      }
  }
  SUBCASE("squared hinge variant") {
    Rng rng(29);
    MatrixXd emb = random_embeddings(rng, 4, 6);
    std::vector<int> labels{0, 0, 1, 2};
    auto pairs = loss::form_pairs(labels);
    double want = 0.0;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const VectorXd a = emb.row(pairs.anchor_idx[p]),
                     b = emb.row(pairs.other_idx[p]);
      const double cd = 1.0 - a.dot(b) / (a.norm() * b.norm());
      if (pairs.is_positive[p]) {
        want += cd;
      } else {
        const double h = std::max(0.0, 1.0 - cd);
        want += h * h;
      }
    }
    want /= static_cast<double>(pairs.size());
    CHECK(loss::contrastive_loss(emb, pairs, 1.0, true) ==
          doctest::Approx(want).epsilon(1e-9));
  }
  SUBCASE("zero-norm row rejected") {
    MatrixXd emb = MatrixXd::Zero(2, 3);
    emb(0, 0) = 1.0;
    CHECK_THROWS_AS(loss::contrastive_loss(emb, loss::form_pairs({0, 1})),
                    std::invalid_argument);
  }
}

TEST_CASE("cross entropy") {
  SUBCASE("uniform logits give ln K") {
    MatrixXd logits = MatrixXd::Constant(3, 5, 0.7);
    CHECK(loss::cross_entropy(logits, {0, 3, 4}) ==
          doctest::Approx(std::log(5.0)).epsilon(1e-12));
  }
  SUBCASE("confident logits approach zero") {
    MatrixXd logits = MatrixXd::Zero(2, 3);
    logits(0, 1) = 50.0;
    logits(1, 2) = 50.0;
    CHECK(loss::cross_entropy(logits, {1, 2}) < 1e-9);
  }
  SUBCASE("random 4x3 matches log-sum-exp oracle") {
    Rng rng(3);
    MatrixXd logits = random_embeddings(rng, 4, 3);
    std::vector<int> labels{2, 0, 1, 1};
    double want = 0.0;
    for (int r = 0; r < 4; ++r) {
      double z = 0.0;
      for (int c = 0; c < 3; ++c) z += std::exp(logits(r, c));
      want += std::log(z) - logits(r, labels[r]);
    }
    want /= 4.0;
    CHECK(loss::cross_entropy(logits, labels) ==
          doctest::Approx(want).epsilon(1e-6));
  }
  SUBCASE("K < 2 rejected") {
    MatrixXd logits = MatrixXd::Zero(2, 1);
    CHECK_THROWS_AS(loss::cross_entropy(logits, {0, 0}), std::invalid_argument);
  }
  SUBCASE("gradient is softmax minus one-hot") {
    Rng rng(5);
    MatrixXd logits = random_embeddings(rng, 3, 4);
    std::vector<int> labels{1, 3, 0};
    MatrixXd grad = loss::cross_entropy_grad(logits, labels);
    const double eps = 1e-6;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) {
        MatrixXd lp = logits, lm = logits;
        lp(r, c) += eps;
        lm(r, c) -= eps;
        const double fd =
            (loss::cross_entropy(lp, labels) - loss::cross_entropy(lm, labels)) /
            (2 * eps);
        CHECK(grad(r, c) == doctest::Approx(fd).epsilon(1e-5));
      }
  }
}

TEST_CASE("bayesian total loss") {
  SUBCASE("unit sigma evaluation") {
    loss::LossWeights w;
    CHECK(loss::bayesian_total_loss(2.0, 4.0, w) == doctest::Approx(3.0));
    CHECK(loss::bayesian_total_loss(0.0, 0.0, w) == doctest::Approx(0.0));
  }
  SUBCASE("unit sigma reduces to the loss mean") {
    Rng rng(17);
    loss::LossWeights w;
    for (int i = 0; i < 20; ++i) {
      const double a = rng.uniform(0.0, 5.0), b = rng.uniform(0.0, 5.0);
      CHECK(loss::bayesian_total_loss(a, b, w) ==
            doctest::Approx((a + b) / 2.0).epsilon(1e-12));
    }
  }
  SUBCASE("sigma gradient at the documented point") {
    loss::LossWeights w;  // sigma1 = 1, so d/d(log sigma1) = d/d(sigma1)
    auto g = loss::bayesian_total_grads(2.0, 4.0, w);
    CHECK(g.d_log_sigma1 == doctest::Approx(-1.0));
  }
  SUBCASE("gradients match central differences on 100 random points") {
    Rng rng(23);
    for (int i = 0; i < 100; ++i) {
      const double l_ce = rng.uniform(0.05, 6.0);
      const double l_cl = rng.uniform(0.05, 6.0);
      loss::LossWeights w;
      w.log_sigma1 = rng.uniform(-1.0, 1.0);
      w.log_sigma2 = rng.uniform(-1.0, 1.0);
      const auto g = loss::bayesian_total_grads(l_ce, l_cl, w);
      const double eps = 1e-6;

      auto check_rel = [&](double analytic, double numeric) {
        const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
        CHECK(std::abs(analytic - numeric) / scale < 1e-5);
      };

      {
        loss::LossWeights wp = w, wm = w;
        wp.log_sigma1 += eps;
        wm.log_sigma1 -= eps;
        check_rel(g.d_log_sigma1, (loss::bayesian_total_loss(l_ce, l_cl, wp) -
                                   loss::bayesian_total_loss(l_ce, l_cl, wm)) /
                                      (2 * eps));
      }
      {
        loss::LossWeights wp = w, wm = w;
        wp.log_sigma2 += eps;
        wm.log_sigma2 -= eps;
        check_rel(g.d_log_sigma2, (loss::bayesian_total_loss(l_ce, l_cl, wp) -
                                   loss::bayesian_total_loss(l_ce, l_cl, wm)) /
                                      (2 * eps));
      }
      check_rel(g.d_l_ce, (loss::bayesian_total_loss(l_ce + eps, l_cl, w) -
                           loss::bayesian_total_loss(l_ce - eps, l_cl, w)) /
                              (2 * eps));
      check_rel(g.d_l_cl, (loss::bayesian_total_loss(l_ce, l_cl + eps, w) -
                           loss::bayesian_total_loss(l_ce, l_cl - eps, w)) /
                              (2 * eps));
    }
  }
  SUBCASE("non-finite inputs rejected") {
    loss::LossWeights w;
    CHECK_THROWS_AS(
        loss::bayesian_total_loss(std::numeric_limits<double>::quiet_NaN(), 0, w),
        std::invalid_argument);
  }
}

TEST_CASE("optimal sigma and descent") {
  CHECK(loss::optimal_sigma(1.0) == doctest::Approx(1.0));
  CHECK(loss::optimal_sigma(4.0) == doctest::Approx(2.0));
  CHECK_THROWS_AS(loss::optimal_sigma(0.0), std::invalid_argument);

  SUBCASE("gradient descent on frozen losses converges to sqrt(l)") {
    const double l_ce = 4.0, l_cl = 1.0;
    loss::LossWeights w;
    double prev = loss::bayesian_total_loss(l_ce, l_cl, w);
    for (int step = 0; step < 5000; ++step) {
      const auto g = loss::bayesian_total_grads(l_ce, l_cl, w);
      w.log_sigma1 -= 0.01 * g.d_log_sigma1;
      w.log_sigma2 -= 0.01 * g.d_log_sigma2;
      const double cur = loss::bayesian_total_loss(l_ce, l_cl, w);
      CHECK(cur <= prev + 1e-12);
      prev = cur;
    }
    CHECK(w.sigma1() == doctest::Approx(2.0).epsilon(1e-2));
    CHECK(w.sigma2() == doctest::Approx(1.0).epsilon(1e-2));
  }
  SUBCASE("unit-sigma total dominates the optimum") {
    Rng rng(31);
    for (int i = 0; i < 20; ++i) {
      const double l1 = rng.uniform(0.1, 5.0), l2 = rng.uniform(0.1, 5.0);
      loss::LossWeights unit;
      loss::LossWeights best;
      best.log_sigma1 = std::log(loss::optimal_sigma(l1));
      best.log_sigma2 = std::log(loss::optimal_sigma(l2));
      CHECK(loss::bayesian_total_loss(l1, l2, best) <=
            loss::bayesian_total_loss(l1, l2, unit) + 1e-12);
    }
  }
}
