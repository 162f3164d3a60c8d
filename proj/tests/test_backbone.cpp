#include <cmath>

#include "doctest.h"

#include "blcl/backbone.hpp"
#include "blcl/rng.hpp"

using namespace blcl;

namespace {

nn::ArchitecturePlan desk_plan(std::vector<int> specs, int blocks = 2) {
  nn::ArchitecturePlan plan;
  plan.preset = "desk";
  plan.total_blocks = blocks;
  for (int s : specs) plan.per_task.push_back({s});
  return plan;
}

Tensor4 random_batch(Rng& rng, int n, int hw) {
  Tensor4 x(n, 3, hw, hw);
  for (auto& v : x.v) v = static_cast<float>(rng.uniform(-2.0, 2.0));
  return x;
}

std::map<std::string, std::vector<float>> snapshot_params(nn::ModelState& m,
                                                          const std::string& prefix) {
  std::map<std::string, std::vector<float>> out;
  for (const auto& p : m.params())
    if (p.name.rfind(prefix, 0) == 0) out[p.name] = *p.value;
  return out;
}

}  // namespace

TEST_CASE("build_model structure") {
  SUBCASE("cifar32 generalized component has 13 conv layers") {
    nn::ArchitecturePlan plan;
    plan.preset = "cifar32";
    plan.total_blocks = 8;
    plan.per_task = {{1}, {1}, {2}, {2}};
    auto m = nn::build_model(plan, 4, 7);
    CHECK(m.generalized.conv_layer_count() == 13);
    // l = 8: six riser blocks plus the reduced final region (spec 1 -> 1 conv)
    CHECK(m.branches.size() == 1);
    CHECK(m.branches[0].blocks.size() == 7);
    CHECK(m.branches[0].out_channels == 512);
    CHECK(m.head->out_features == 4);
    CHECK(m.head->in_features == 512);
  }
  SUBCASE("l=2 on a 512-wide generalized output, 3 initial classes") {
    auto m = nn::build_model(desk_plan({4, 4}), 3, 1);
    CHECK(m.head->out_features == 3);
    CHECK(m.branches[0].blocks.size() == 2);  // both region blocks kept
  }
  SUBCASE("l=2 needs a 512-wide generalized output") {
    nn::ArchitecturePlan plan;
    plan.preset = "cifar32";  // generalized ends at 32 channels
    plan.total_blocks = 2;
    plan.per_task = {{2}};
    CHECK_THROWS_AS(nn::build_model(plan, 4, 1), std::invalid_argument);
  }
  SUBCASE("spec above region capacity rejected") {
    CHECK_THROWS_AS(nn::build_model(desk_plan({5, 4}), 4, 1),
                    std::invalid_argument);
  }
  SUBCASE("fewer than two classes rejected") {
    CHECK_THROWS_AS(nn::build_model(desk_plan({2, 2}), 1, 1),
                    std::invalid_argument);
  }
  SUBCASE("same seed gives identical parameters, different seed differs") {
    auto a = nn::build_model(desk_plan({2, 2}), 4, 99);
    auto b = nn::build_model(desk_plan({2, 2}), 4, 99);
    auto c = nn::build_model(desk_plan({2, 2}), 4, 100);
    auto pa = a.params();
    auto pb = b.params();
    auto pc = c.params();
    REQUIRE(pa.size() == pb.size());
    bool all_equal = true, any_diff_c = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
      if (*pa[i].value != *pb[i].value) all_equal = false;
      if (*pa[i].value != *pc[i].value) any_diff_c = true;
    }
    CHECK(all_equal);
    CHECK(any_diff_c);
  }
}

TEST_CASE("expand_for_task") {
  auto m = nn::build_model(desk_plan({1, 1, 2, 2}), 4, 5);
  m.class_order = {0, 1, 2, 3};
  const auto old_head_w = m.head->w;
  const auto old_head_b = m.head->b;

  nn::expand_for_task(m, 2, 2, {1});
  REQUIRE(m.branches.size() == 2);
  CHECK(m.num_classes == 6);

  SUBCASE("old head rows preserved bit-exactly") {
    for (std::size_t i = 0; i < old_head_w.size(); ++i)
      CHECK(m.head->w[i] == old_head_w[i]);
    for (std::size_t i = 0; i < old_head_b.size(); ++i)
      CHECK(m.head->b[i] == old_head_b[i]);
  }
  SUBCASE("warm start copies matching branch parameters") {
    auto prev = snapshot_params(m, "spec1.");
    auto fresh = snapshot_params(m, "spec2.");
    for (const auto& [name, value] : fresh) {
      const std::string prev_name = "spec1." + name.substr(6);
      auto it = prev.find(prev_name);
      if (it != prev.end() && it->second.size() == value.size())
        CHECK(value == it->second);
    }
  }
  SUBCASE("final region grows with the spec") {
    nn::expand_for_task(m, 3, 2, {2});
    CHECK(m.branches[2].blocks.size() == 1);
    CHECK(m.branches[2].blocks[0].conv_count == 2);
    nn::expand_for_task(m, 4, 2, {4});
    CHECK(m.branches[3].blocks.size() == 2);
  }
  SUBCASE("spec zero removes the region entirely") {
    nn::expand_for_task(m, 3, 2, {0});
    CHECK(m.branches[2].blocks.empty());
    CHECK(m.branches[2].out_channels == 512);
    // the model still runs and embeds at 512
    Rng rng(3);
    auto out = nn::forward(m, random_batch(rng, 2, 32), false);
    CHECK(out.embedding.cols == 512);
  }
  SUBCASE("out-of-order task rejected") {
    CHECK_THROWS_AS(nn::expand_for_task(m, 4, 2, {1}), std::invalid_argument);
  }
}

TEST_CASE("set_trainable freezes earlier branches only") {
  auto m = nn::build_model(desk_plan({1, 1, 1}, 2), 4, 5);
  nn::expand_for_task(m, 2, 2, {1});
  nn::expand_for_task(m, 3, 2, {1});

  nn::set_trainable(m, 3);
  CHECK(m.branches[0].frozen);
  CHECK(m.branches[1].frozen);
  CHECK_FALSE(m.branches[2].frozen);

  nn::set_trainable(m, 1);
  CHECK_FALSE(m.branches[0].frozen);

  int trainable = 0, frozen = 0;
  nn::set_trainable(m, 3);
  for (const auto& p : m.params()) {
    if (p.is_buffer) continue;
    if (p.trainable)
      ++trainable;
    else
      ++frozen;
  }
  CHECK(frozen > 0);
  CHECK(trainable > frozen);  // generalized + current branch + head
}

TEST_CASE("average_specialized_weights") {
  auto a = nn::build_model(desk_plan({2, 2}), 4, 21);
  auto b = nn::build_model(desk_plan({2, 2}), 4, 22);

  SUBCASE("identical inputs are a fixed point") {
    auto out = nn::average_specialized_weights(a, a);
    auto pa = a.params();
    auto po = out.params();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(*po[i].value == *pa[i].value);
  }
  SUBCASE("elementwise mean against a direct oracle") {
    auto out = nn::average_specialized_weights(a, b);
    auto pa = a.params();
    auto pb = b.params();
    auto po = out.params();
    for (std::size_t i = 0; i < pa.size(); ++i) {
      const bool spec_param = pa[i].name.rfind("spec1.", 0) == 0;
      for (std::size_t k = 0; k < pa[i].value->size(); ++k) {
        const float want = spec_param
                               ? 0.5f * ((*pa[i].value)[k] + (*pb[i].value)[k])
                               : (*pa[i].value)[k];
        CHECK(std::abs((*po[i].value)[k] - want) < 1e-7f);
      }
    }
  }
  SUBCASE("bn stats excluded when asked") {
    auto out = nn::average_specialized_weights(a, b, false);
    auto pa = a.params();
    auto po = out.params();
    for (std::size_t i = 0; i < pa.size(); ++i)
      if (po[i].is_buffer) CHECK(*po[i].value == *pa[i].value);
  }
}

TEST_CASE("forward contract") {
  auto m = nn::build_model(desk_plan({1, 1}), 4, 11);
  Rng rng(12);

  SUBCASE("shapes") {
    auto out = nn::forward(m, random_batch(rng, 5, 32), false);
    CHECK(out.logits.rows == 5);
    CHECK(out.logits.cols == 4);
    CHECK(out.embedding.rows == 5);
    CHECK(out.embedding.cols == 512);
  }
  SUBCASE("zero input stays finite") {
    Tensor4 x(2, 3, 32, 32);
    auto out = nn::forward(m, x, false);
    CHECK(out.logits.all_finite());
    CHECK(out.embedding.all_finite());
  }
  SUBCASE("duplicated sample gives identical rows in eval mode") {
    Tensor4 x = random_batch(rng, 1, 32);
    Tensor4 dup(2, 3, 32, 32);
    std::copy(x.v.begin(), x.v.end(), dup.v.begin());
    std::copy(x.v.begin(), x.v.end(), dup.v.begin() + x.v.size());
    auto out = nn::forward(m, dup, false);
    for (int c = 0; c < out.embedding.cols; ++c)
      CHECK(out.embedding.at(0, c) == out.embedding.at(1, c));
    for (int c = 0; c < out.logits.cols; ++c)
      CHECK(out.logits.at(0, c) == out.logits.at(1, c));
  }
  SUBCASE("wrong spatial dims rejected") {
    CHECK_THROWS_AS(nn::forward(m, random_batch(rng, 1, 16), false),
                    std::invalid_argument);
  }
}

TEST_CASE("parameter_count") {
  SUBCASE("grows monotonically over tasks") {
    auto m = nn::build_model(desk_plan({1, 1, 1, 1}), 4, 3);
    std::size_t prev = nn::parameter_count(m);
    for (int t = 2; t <= 4; ++t) {
      nn::expand_for_task(m, t, 2, {1});
      const std::size_t cur = nn::parameter_count(m);
      CHECK(cur > prev);
      prev = cur;
    }
  }
  SUBCASE("smaller specs cost at most as much") {
    auto small = nn::build_model(desk_plan({0, 0, 0, 0}), 4, 3);
    auto large = nn::build_model(desk_plan({1, 1, 2, 3}), 4, 3);
    for (int t = 2; t <= 4; ++t) {
      nn::expand_for_task(small, t, 2, {0});
      nn::expand_for_task(large, t, 2, {t == 4 ? 3 : (t == 3 ? 2 : 1)});
    }
    CHECK(nn::parameter_count(small) <= nn::parameter_count(large));
  }
  SUBCASE("empty specialized component counts generalized + head only") {
    auto m = nn::build_model(desk_plan({0, 0}), 4, 3);
    std::size_t gen_head = 0;
    for (const auto& p : m.params())
      if (!p.is_buffer &&
          (p.name.rfind("gen.", 0) == 0 || p.name.rfind("head", 0) == 0))
        gen_head += p.value->size();
    CHECK(nn::parameter_count(m) == gen_head);
  }
}
