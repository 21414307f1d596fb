#include "shapegrpo/advantage.hpp"

#include <doctest.h>

#include <random>

using namespace shapegrpo;

namespace {

GroupSample unitGroup(std::initializer_list<Rewards> rewards, int reasoning_len = 0) {
  std::vector<Response> responses;
  for (const auto& r : rewards) {
    responses.push_back({ResponseLayout::contiguous(reasoning_len, std::vector<int>(r.size(), 1)), r});
  }
  return GroupSample(std::move(responses));
}

}  // namespace

TEST_CASE("group stats") {
  const auto two = groupStats(unitGroup({Rewards{1.0}, Rewards{0.0}}));
  CHECK(two.mean == 0.5);
  CHECK(two.std == 0.5);
  const auto same = groupStats(unitGroup({Rewards{4.0}, Rewards{4.0}, Rewards{4.0}}));
  CHECK(same.mean == 4.0);
  CHECK(same.std == 1.0);
  const auto single = groupStats(unitGroup({Rewards{3.0}}));
  CHECK(single.mean == 0.0);
  CHECK(single.std == 1.0);
  // Sequence-level reward is the max over candidates.
  const auto sets = groupStats(unitGroup({Rewards{0.0, 2.0}, Rewards{0.0, 0.0}}));
  CHECK(sets.mean == 1.0);
  CHECK(sets.std == 1.0);
}

TEST_CASE("GroupSample rejects empty groups and mismatched responses") {
  CHECK_THROWS_AS(GroupSample({}), std::invalid_argument);
  CHECK_THROWS_AS(GroupSample({{ResponseLayout::contiguous(0, {1, 1}), Rewards{1.0}}}), std::invalid_argument);
}

TEST_CASE("normalize: GRPO on the symmetric pair") {
  const auto g = unitGroup({Rewards{1.0}, Rewards{0.0}}, 2);
  const auto adv = normalize(g, allocate(Scheme::Grpo, g));
  CHECK((adv[0].array() == 1.0).all());
  CHECK((adv[1].array() == -1.0).all());
}

TEST_CASE("normalize: binary ShapE composed with group stats") {
  const auto g = unitGroup({Rewards{1.0, 0.0}, Rewards{0.0, 0.0}});
  const auto adv = normalize(g, allocate(Scheme::Shape, g));
  CHECK(adv[0](0) == doctest::Approx(3.0));
  CHECK(adv[0](1) == doctest::Approx(-1.0));
}

TEST_CASE("normalize: identical rewards use the clamped std") {
  const Rewards r{4.0, 1.0, 0.0};
  const auto g = unitGroup({r, r, r}, 1);
  const auto adv = normalize(g, allocate(Scheme::Shape, g));
  const auto phi = closedFormMaxShapley(r);
  for (const auto& a : adv) {
    CHECK(a(0) == 0.0);
    for (int j = 0; j < 3; ++j) CHECK(a(1 + j) == doctest::Approx(3.0 * phi(j) - 4.0));
  }
  // And GRPO collapses to zero everywhere.
  for (const auto& a : normalize(g, allocate(Scheme::Grpo, g))) CHECK((a.array() == 0.0).all());
}

TEST_CASE("normalize rejects shape mismatches") {
  const auto g = unitGroup({Rewards{1.0}, Rewards{0.0}});
  CHECK_THROWS_AS(normalize(g, PerToken{Eigen::VectorXd::Zero(1)}), std::invalid_argument);
  CHECK_THROWS_AS(normalize(g, PerToken{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(3)}), std::invalid_argument);
}

TEST_CASE("surrogate: ratio one gives the mean of token-mean advantages") {
  PerToken adv{(Eigen::VectorXd(2) << 1.0, 3.0).finished(), (Eigen::VectorXd(1) << -1.0).finished()};
  PerToken ones{Eigen::VectorXd::Ones(2), Eigen::VectorXd::Ones(1)};
  PerToken zeros{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(1)};
  const auto s = surrogateSignal(adv, ones, 0.2, 0.0, zeros);
  CHECK(s.objective == doctest::Approx(0.5 * (2.0 + -1.0)));
  CHECK(s.grad_weight[0] == adv[0]);
  CHECK(s.grad_weight[1] == adv[1]);
}

TEST_CASE("surrogate: clip branches") {
  const double eps = 0.2;
  PerToken zeros{Eigen::VectorXd::Zero(1)};
  auto one = [](double v) { return PerToken{Eigen::VectorXd::Constant(1, v)}; };

  SUBCASE("positive advantage above the band saturates") {
    const auto s = surrogateSignal(one(2.0), one(1.0 + 2 * eps), eps, 0.0, zeros);
    CHECK(s.objective == doctest::Approx((1.0 + eps) * 2.0));
    CHECK(s.grad_weight[0](0) == 0.0);
  }
  SUBCASE("negative advantage below the band: the clipped product is the minimum") {
    // min((1-2eps)A, (1-eps)A) with A < 0 is (1-eps)A; the ratio gets no gradient.
    const auto s = surrogateSignal(one(-2.0), one(1.0 - 2 * eps), eps, 0.0, zeros);
    CHECK(s.objective == doctest::Approx((1.0 - eps) * -2.0));
    CHECK(s.grad_weight[0](0) == 0.0);
  }
  SUBCASE("negative advantage above the band stays unclipped") {
    const auto s = surrogateSignal(one(-2.0), one(1.0 + 2 * eps), eps, 0.0, zeros);
    CHECK(s.objective == doctest::Approx((1.0 + 2 * eps) * -2.0));
    CHECK(s.grad_weight[0](0) == -2.0);
  }
  SUBCASE("positive advantage below the band stays unclipped") {
    const auto s = surrogateSignal(one(2.0), one(1.0 - 2 * eps), eps, 0.0, zeros);
    CHECK(s.objective == doctest::Approx((1.0 - 2 * eps) * 2.0));
    CHECK(s.grad_weight[0](0) == 2.0);
  }
  SUBCASE("KL term is subtracted with its coefficient") {
    const auto s = surrogateSignal(one(0.0), one(1.0), eps, 0.5, one(0.4));
    CHECK(s.objective == doctest::Approx(-0.2));
  }
}

TEST_CASE("surrogate: argument validation") {
  PerToken one{Eigen::VectorXd::Ones(1)};
  PerToken zero{Eigen::VectorXd::Zero(1)};
  CHECK_THROWS_AS(surrogateSignal(one, zero, 0.2, 0.0, zero), std::invalid_argument);
  CHECK_THROWS_AS(surrogateSignal(one, one, 0.0, 0.0, zero), std::invalid_argument);
  CHECK_THROWS_AS(surrogateSignal(one, one, 1.0, 0.0, zero), std::invalid_argument);
  CHECK_THROWS_AS(surrogateSignal(one, PerToken{Eigen::VectorXd::Ones(2)}, 0.2, 0.0, zero), std::invalid_argument);
}

TEST_CASE("surrogate objective shrinks as the clip band narrows for over-ratio positive tokens") {
  PerToken adv{Eigen::VectorXd::Constant(3, 1.5)};
  PerToken ratio{Eigen::VectorXd::Constant(3, 1.5)};
  PerToken zeros{Eigen::VectorXd::Zero(3)};
  double prev = 1e300;
  for (double eps = 0.9; eps > 0.01; eps -= 0.05) {
    const double obj = surrogateSignal(adv, ratio, eps, 0.0, zeros).objective;
    CHECK(obj <= prev + 1e-15);
    prev = obj;
  }
}

TEST_CASE("reweighting identity and zero-reward sign (property)") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> gdist(1, 8), kdist(1, 6), len(1, 3), wlen(0, 4), grid(0, 3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 400; ++trial) {
    const int g = gdist(rng);
    const int k = kdist(rng);
    const bool equal = trial % 2 == 0;
    std::vector<Response> responses;
    for (int i = 0; i < g; ++i) {
      std::vector<int> lengths(k);
      const int shared = len(rng);
      for (auto& l : lengths) l = equal ? shared : len(rng);
      Eigen::VectorXd v(k);
      for (auto& x : v) x = trial % 3 ? u(rng) * static_cast<double>(grid(rng) > 0) : static_cast<double>(grid(rng) > 1);
      responses.push_back({ResponseLayout::contiguous(wlen(rng), lengths), Rewards(v)});
    }
    const GroupSample group(std::move(responses));
    const auto grpo = normalize(group, allocate(Scheme::Grpo, group));
    const auto shape = normalize(group, allocate(Scheme::Shape, group));
    for (int i = 0; i < g; ++i) {
      if (equal) CHECK(std::abs(grpo[i].sum() - shape[i].sum()) < 1e-9);
      const auto& layout = group[i].layout;
      for (int t = 0; t < layout.totalLength(); ++t) {
        const int j = layout.owner(t);
        if (j >= 0 && group[i].rewards[j] == 0.0) CHECK(shape[i](t) <= 0.0);
      }
    }
  }
}

TEST_CASE("shared normalization: statistics ignore the allocation scheme") {
  const auto g = unitGroup({Rewards{1.0, 0.0, 0.5}, Rewards{0.2, 0.9, 0.0}, Rewards{0.0, 0.0, 0.0}});
  const auto stats = groupStats(g);
  for (Scheme s : {Scheme::Grpo, Scheme::Shape, Scheme::Wta}) {
    const auto rewards = allocate(s, g);
    const auto adv = normalize(g, rewards);
    for (int i = 0; i < g.size(); ++i) {
      CHECK((adv[i] - (rewards[i].array() - stats.mean).matrix() / stats.std).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}
