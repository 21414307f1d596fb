#include "oracles.hpp"

#include "shapegrpo/bandit.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

using namespace shapegrpo;

namespace {

Eigen::VectorXd randomLogits(std::mt19937_64& rng, int n, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

AdvantageTensor randomAdvantages(std::mt19937_64& rng, const Rollout& rollout) {
  std::normal_distribution<double> normal(0.0, 1.5);
  AdvantageTensor adv;
  for (const auto& r : rollout.group.responses()) {
    Eigen::VectorXd a(r.layout.totalLength());
    for (auto& x : a) x = normal(rng);
    adv.push_back(a);
  }
  return adv;
}

}  // namespace

TEST_CASE("sampling exhausts a two-item environment") {
  const auto env = Environment(Eigen::Vector2d(0.3, 0.8));
  const PolicyState policy(Eigen::Vector2d(0.5, -0.5), 2);
  const Rollout r = sampleRollout(policy, env, 5, 42);
  for (int i = 0; i < 5; ++i) {
    auto picks = r.chosen_items[i];
    std::sort(picks.begin(), picks.end());
    CHECK(picks == std::vector<int>{0, 1});
    auto rewards = r.group[i].rewards.values();
    CHECK(rewards.minCoeff() == 0.3);
    CHECK(rewards.maxCoeff() == 0.8);
  }
}

TEST_CASE("uniform single-pick sampling frequencies") {
  const auto env = Environment::binary(4, {0});
  const PolicyState policy(Eigen::VectorXd::Zero(4), 1);
  const Rollout r = sampleRollout(policy, env, 100000, 7);
  std::vector<int> counts(4, 0);
  for (const auto& picks : r.chosen_items) ++counts[picks[0]];
  for (int c : counts) CHECK(std::abs(c / 1e5 - 0.25) < 0.01);
}

TEST_CASE("sampling is reproducible from the seed") {
  const auto env = Environment(Eigen::VectorXd::LinSpaced(12, 0.0, 1.0), 0.2);
  std::mt19937_64 rng(1);
  const PolicyState policy(randomLogits(rng, 12, 1.0), 4);
  const Rollout a = sampleRollout(policy, env, 16, 123, {2, 3});
  const Rollout b = sampleRollout(policy, env, 16, 123, {2, 3});
  CHECK(a.chosen_items == b.chosen_items);
  for (int i = 0; i < 16; ++i) {
    CHECK(a.old_log_probs[i] == b.old_log_probs[i]);
    CHECK(a.group[i].rewards.values() == b.group[i].rewards.values());
  }
  const Rollout c = sampleRollout(policy, env, 16, 124, {2, 3});
  CHECK(c.chosen_items != a.chosen_items);
}

TEST_CASE("rollouts: distinct picks, normalized pick distributions, nonnegative noisy rewards") {
  std::mt19937_64 rng(9);
  const auto env = Environment(Eigen::VectorXd::LinSpaced(15, 0.0, 1.0), 0.5);
  for (int trial = 0; trial < 30; ++trial) {
    const PolicyState policy(randomLogits(rng, 15, 2.0), 1 + trial % 6);
    const Rollout r = sampleRollout(policy, env, 8, trial, {1 + trial % 3, trial % 4});
    for (int i = 0; i < 8; ++i) {
      const auto& picks = r.chosen_items[i];
      CHECK(std::set<int>(picks.begin(), picks.end()).size() == picks.size());
      CHECK((r.group[i].rewards.values().array() >= 0.0).all());
      CHECK(r.old_log_probs[i].allFinite());
      std::vector<bool> excluded(15, false);
      for (int item : picks) {
        const Eigen::VectorXd p = pickDistribution(policy.logits, excluded);
        CHECK(std::abs(p.sum() - 1.0) <= 1e-12);
        excluded[item] = true;
      }
    }
  }
}

TEST_CASE("policy gradient step: zero signal leaves logits untouched") {
  const auto env = Environment::binary(6, {2});
  PolicyState policy(Eigen::VectorXd::LinSpaced(6, -1.0, 1.0), 3);
  const Rollout r = sampleRollout(policy, env, 4, 5);
  AdvantageTensor zero;
  for (const auto& resp : r.group.responses()) zero.push_back(Eigen::VectorXd::Zero(resp.layout.totalLength()));
  const PolicyState next = policyGradientStep(policy, r, zero, 0.5, 0.2, 0.0);
  CHECK(next.logits == policy.logits);
  CHECK(next.step_count == 1);
  CHECK_THROWS_AS(policyGradientStep(policy, r, zero, 0.0, 0.2, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(policyGradientStep(policy, r, AdvantageTensor(zero.begin(), zero.begin() + 1), 0.1, 0.2, 0.0),
                  std::invalid_argument);
}

TEST_CASE("policy gradient step: a positive pick raises its logit") {
  const auto env = Environment::binary(5, {3});
  const PolicyState policy(Eigen::VectorXd::Zero(5), 1);
  const Rollout r = sampleRollout(policy, env, 1, 11);
  const int item = r.chosen_items[0][0];
  const PolicyState next = policyGradientStep(policy, r, {Eigen::VectorXd::Constant(1, 1.0)}, 0.1, 0.2, 0.01);
  CHECK(next.logits(item) > policy.logits(item));
}

TEST_CASE("analytic surrogate gradient matches central differences") {
  std::mt19937_64 rng(31);
  const double h = 1e-4;
  const double eps = 0.2;
  double worst = 0.0;
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 4 + trial % 7;
    const int k = 1 + trial % std::min(n, 4);
    const auto env = Environment(Eigen::VectorXd::LinSpaced(n, 0.0, 1.0));
    PolicyState policy(randomLogits(rng, n, 1.0), k);
    policy.reference_logits = randomLogits(rng, n, 1.0);
    const Rollout r = sampleRollout(policy, env, 3, trial, {1 + trial % 3, trial % 3});
    const double beta = trial % 2 ? 0.01 : 0.3;
    const AdvantageTensor adv =
        trial % 3 == 0 ? randomAdvantages(rng, r) : schemeAdvantages(static_cast<Scheme>((trial / 3) % 3), r, Hyper{});

    // At the sampling policy (ratio 1) and at a perturbed policy exercising the clip.
    for (double shift : {0.0, 0.5}) {
      const Eigen::VectorXd theta = policy.logits + shift * randomLogits(rng, n, 1.0);
      const auto ana = surrogateGradient(theta, policy.reference_logits, r, adv, eps, beta);
      const auto f = [&](const Eigen::VectorXd& x) {
        return oracle::surrogateObjective(x, policy.reference_logits, r, adv, eps, beta);
      };
      CHECK(ana.objective == doctest::Approx(f(theta)).epsilon(1e-12));
      const Eigen::VectorXd fd = oracle::centralDifference(f, theta, h);
      worst = std::max(worst, (fd - ana.gradient).cwiseAbs().maxCoeff());
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("greedy set and KL") {
  CHECK(greedySet(Eigen::Vector4d(0.0, 2.0, 2.0, 1.0), 2) == std::vector<int>{1, 2});
  CHECK(greedySet(Eigen::VectorXd::Zero(5), 3) == std::vector<int>{0, 1, 2});
  const auto env = Environment::binary(4, {3});
  PolicyState policy(Eigen::VectorXd::Zero(4), 1);
  CHECK(greedySetReward(policy, env) == 0.0);
  CHECK(klToReference(policy) == 0.0);
  policy.logits(3) = 1.0;
  CHECK(greedySetReward(policy, env) == 1.0);
  CHECK(klToReference(policy) > 0.0);
}

TEST_CASE("train: binary environment with one correct item is solved by ShapE") {
  const auto env = Environment::binary(20, {13});
  Hyper hyper;
  std::vector<int> reached;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    PolicyState policy(Eigen::VectorXd::Zero(20), 4);
    const auto trace = train(policy, env, Scheme::Shape, 500, hyper, seed);
    const auto hit = std::find_if(trace.begin(), trace.end(), [](const TraceRow& r) { return r.greedy_set_reward == 1.0; });
    reached.push_back(hit == trace.end() ? 501 : static_cast<int>(hit->step));
    for (const auto& row : trace) CHECK(row.kl_to_reference >= 0.0);
  }
  std::nth_element(reached.begin(), reached.begin() + 5, reached.end());
  CHECK(reached[5] <= 500);
}

TEST_CASE("train: preconditions and determinism") {
  const auto env = Environment::binary(10, {1, 7});
  PolicyState p0(Eigen::VectorXd::Zero(10), 3);
  CHECK_THROWS_AS(train(p0, env, Scheme::Grpo, 0, Hyper{}, 1), std::invalid_argument);

  Hyper hyper;
  hyper.inner_epochs = 3;
  hyper.layout = {2, 3};
  hyper.penalty = {2, true};
  for (Scheme s : {Scheme::Grpo, Scheme::Shape, Scheme::Wta}) {
    PolicyState a(Eigen::VectorXd::Zero(10), 3), b(Eigen::VectorXd::Zero(10), 3);
    const auto ta = train(a, env, s, 50, hyper, 99);
    const auto tb = train(b, env, s, 50, hyper, 99);
    REQUIRE(ta.size() == tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i) {
      CHECK(ta[i].mean_set_reward == tb[i].mean_set_reward);
      CHECK(ta[i].greedy_set_reward == tb[i].greedy_set_reward);
      CHECK(ta[i].kl_to_reference == tb[i].kl_to_reference);
      CHECK(ta[i].step == static_cast<std::int64_t>(i + 1));
    }
    CHECK(a.logits == b.logits);
    CHECK(a.step_count == 150);
  }
}

TEST_CASE("first-k reward curve") {
  const auto env = Environment::binary(10, {0});
  const PolicyState uniform(Eigen::VectorXd::Zero(10), 4);
  const Rollout r = sampleRollout(uniform, env, 40000, 3);
  const Eigen::VectorXd curve = firstKRewardCurve(env, r, 4);
  for (int j = 0; j < 4; ++j) CHECK(std::abs(curve(j) - 0.1 * (j + 1)) < 0.01);
  for (int j = 1; j < 4; ++j) CHECK(curve(j) >= curve(j - 1));
  CHECK(curve(3) == doctest::Approx(r.group.setRewards().mean()));
  CHECK_THROWS_AS(firstKRewardCurve(env, r, 5), std::invalid_argument);
  CHECK_THROWS_AS(firstKRewardCurve(env, r, 0), std::invalid_argument);
}

TEST_CASE("environment and policy validation") {
  CHECK_THROWS_AS(Environment(Eigen::Vector2d(0.5, 1.5)), std::invalid_argument);
  CHECK_THROWS_AS(Environment(Eigen::Vector2d(0.5, 0.5), -1.0), std::invalid_argument);
  CHECK_THROWS_AS(Environment::binary(3, {3}), std::invalid_argument);
  CHECK_THROWS_AS(PolicyState(Eigen::VectorXd::Zero(3), 4), std::invalid_argument);
  CHECK_THROWS_AS(PolicyState(Eigen::VectorXd::Zero(3), 0), std::invalid_argument);
}
