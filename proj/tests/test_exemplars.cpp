#include <filesystem>

#include "doctest.h"

#include "blcl/exemplars.hpp"
#include "blcl/rng.hpp"

using namespace blcl;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd pad_to_512(const std::vector<std::pair<double, double>>& pts) {
  MatrixXd m = MatrixXd::Zero(static_cast<Eigen::Index>(pts.size()), 512);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    m(static_cast<Eigen::Index>(i), 0) = pts[i].first;
    m(static_cast<Eigen::Index>(i), 1) = pts[i].second;
  }
  return m;
}

MatrixXd random_features(Rng& rng, int n, int d) {
  MatrixXd m(n, d);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < d; ++c) m(r, c) = rng.normal(0.0, 1.0);
  return m;
}

}  // namespace

TEST_CASE("herding_select") {
  SUBCASE("m = N returns every index in herding order") {
    Rng rng(4);
    MatrixXd f = random_features(rng, 6, 8);
    auto order = memory::herding_select(f, 6);
    REQUIRE(order.size() == 6);
    std::vector<int> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5});
  }
  SUBCASE("m = 1 picks the class-mean point") {
    // mean of {(0,0),(2,0),(1,0)} is (1,0): index 2 is exactly on it
    auto f = pad_to_512({{0, 0}, {2, 0}, {1, 0}});
    auto order = memory::herding_select(f, 1);
    REQUIRE(order.size() == 1);
    // brute force over all single choices
    const VectorXd mean = f.colwise().mean();
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if ((mean - f.row(i).transpose()).norm() <
          (mean - f.row(best).transpose()).norm())
        best = i;
    CHECK(order[0] == best);
    CHECK(order[0] == 2);
  }
  SUBCASE("m = 2 matches the greedily reachable pair oracle") {
    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
      MatrixXd f = random_features(rng, 5, 6);
      const VectorXd mean = f.colwise().mean();
      // oracle: first element is the best singleton; second minimizes the
      // two-element running-mean distance among the remaining points
      int first = 0;
      for (int i = 1; i < 5; ++i)
        if ((mean - f.row(i).transpose()).norm() <
            (mean - f.row(first).transpose()).norm())
          first = i;
      int second = -1;
      double best_dist = 0;
      for (int i = 0; i < 5; ++i) {
        if (i == first) continue;
        const double d =
            (mean - (f.row(first) + f.row(i)).transpose() / 2.0).norm();
        if (second < 0 || d < best_dist) {
          second = i;
          best_dist = d;
        }
      }
      auto order = memory::herding_select(f, 2);
      CHECK(order[0] == first);
      CHECK(order[1] == second);
    }
  }
  SUBCASE("prefix property over 20 random feature sets") {
    Rng rng(15);
    for (int trial = 0; trial < 20; ++trial) {
      const int n = rng.uniform_int(3, 12);
      MatrixXd f = random_features(rng, n, 5);
      auto full = memory::herding_select(f, n);
      for (int m1 = 1; m1 < n; ++m1) {
        auto part = memory::herding_select(f, m1);
        for (int i = 0; i < m1; ++i) CHECK(part[i] == full[i]);
      }
    }
  }
  SUBCASE("ties break to the lowest index") {
    // identical points tie at every step
    auto f = pad_to_512({{1, 1}, {1, 1}, {1, 1}});
    auto order = memory::herding_select(f, 3);
    CHECK(order == std::vector<int>{0, 1, 2});
  }
  SUBCASE("m out of range rejected") {
    Rng rng(2);
    MatrixXd f = random_features(rng, 3, 4);
    CHECK_THROWS_AS(memory::herding_select(f, 0), std::invalid_argument);
    CHECK_THROWS_AS(memory::herding_select(f, 4), std::invalid_argument);
  }
}

TEST_CASE("update_exemplars budget schedule") {
  Rng rng(44);
  memory::ExemplarSet store;
  store.budget = 2000;

  // 10-task stream over 100 classes, 10 classes per task, 300 samples each
  int next_class = 0;
  std::vector<std::size_t> counts_after;
  for (int t = 1; t <= 10; ++t) {
    std::map<int, memory::ClassFeatures> fresh;
    for (int c = 0; c < 10; ++c) {
      const int cls = next_class++;
      memory::ClassFeatures cf;
      cf.features = random_features(rng, 300, 8);
      for (int i = 0; i < 300; ++i)
        cf.ids.push_back("c" + std::to_string(cls) + "-" + std::to_string(i));
      fresh[cls] = std::move(cf);
    }
    store = memory::update_exemplars(t, store, fresh);
    CHECK(store.total() <= 2000);
    counts_after.push_back(store.per_class.begin()->second.size());
  }
  // Appendix-style schedule: 200, 100, 66 per class after tasks 1..3
  CHECK(counts_after[0] == 200);
  CHECK(counts_after[1] == 100);
  CHECK(counts_after[2] == 66);
  CHECK(store.per_class.size() == 100);
  for (const auto& [cls, ids] : store.per_class) CHECK(ids.size() == 20);
}

TEST_CASE("update_exemplars truncation keeps a stable prefix") {
  Rng rng(45);
  memory::ExemplarSet store;
  store.budget = 100;

  std::map<int, memory::ClassFeatures> t1;
  for (int cls = 0; cls < 2; ++cls) {
    memory::ClassFeatures cf;
    cf.features = random_features(rng, 80, 4);
    for (int i = 0; i < 80; ++i)
      cf.ids.push_back("c" + std::to_string(cls) + "-" + std::to_string(i));
    t1[cls] = std::move(cf);
  }
  store = memory::update_exemplars(1, store, t1);
  const auto class0_before = store.per_class.at(0);
  REQUIRE(class0_before.size() == 50);

  std::map<int, memory::ClassFeatures> t2;
  for (int cls = 2; cls < 5; ++cls) {
    memory::ClassFeatures cf;
    cf.features = random_features(rng, 80, 4);
    for (int i = 0; i < 80; ++i)
      cf.ids.push_back("c" + std::to_string(cls) + "-" + std::to_string(i));
    t2[cls] = std::move(cf);
  }
  store = memory::update_exemplars(2, store, t2);
  const auto& class0_after = store.per_class.at(0);
  REQUIRE(class0_after.size() == 20);  // floor(100 / 5)
  for (std::size_t i = 0; i < class0_after.size(); ++i)
    CHECK(class0_after[i] == class0_before[i]);
  CHECK(store.total() <= 100);
}

TEST_CASE("update_exemplars keeps short classes whole") {
  Rng rng(46);
  memory::ExemplarSet store;
  store.budget = 2000;
  std::map<int, memory::ClassFeatures> fresh;
  memory::ClassFeatures tiny;
  tiny.features = random_features(rng, 9, 4);
  for (int i = 0; i < 9; ++i) tiny.ids.push_back("t" + std::to_string(i));
  fresh[0] = std::move(tiny);
  memory::ClassFeatures big;
  big.features = random_features(rng, 1500, 4);
  for (int i = 0; i < 1500; ++i) big.ids.push_back("b" + std::to_string(i));
  fresh[1] = std::move(big);

  store = memory::update_exemplars(1, store, fresh);
  CHECK(store.per_class.at(0).size() == 9);      // fewer than the 1000 quota
  CHECK(store.per_class.at(1).size() == 1000);
  CHECK(store.total() <= 2000);
}

TEST_CASE("exemplar manifest round trip") {
  memory::ExemplarSet store;
  store.budget = 50;
  store.per_class[3] = {"a", "b", "c"};
  store.per_class[7] = {"x"};
  const auto path =
      (std::filesystem::temp_directory_path() / "blcl_exemplars_test.tsv").string();
  memory::write_manifest(store, path);
  const auto back = memory::read_manifest(path, 50);
  CHECK(back.per_class == store.per_class);
  std::filesystem::remove(path);
}
