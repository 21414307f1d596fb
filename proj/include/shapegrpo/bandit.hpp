#pragma once

// Combinatorial bandit with a tabular sequential-softmax (Plackett-Luce)
// policy that emits K distinct candidates per response.

#include "shapegrpo/advantage.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace shapegrpo {

class Environment {
 public:
  /// Graded utilities in [0, r_max], optionally with Gaussian rating noise.
  Environment(Eigen::VectorXd utilities, double noise_std = 0.0, double r_max = 1.0);

  /// 0/1 utilities with the listed items correct; noise-free.
  static Environment binary(int n_items, const std::vector<int>& correct_items);

  int items() const { return static_cast<int>(utilities_.size()); }
  const Eigen::VectorXd& utilities() const { return utilities_; }
  double noiseStd() const { return noise_std_; }
  double rMax() const { return r_max_; }
  bool isBinary() const { return binary_; }

  /// Best achievable set reward for sets of `k` items.
  double optimalSetReward() const { return utilities_.maxCoeff(); }

 private:
  Eigen::VectorXd utilities_;
  double noise_std_;
  double r_max_;
  bool binary_ = false;
};

struct PolicyState {
  PolicyState(Eigen::VectorXd init_logits, int k);

  Eigen::VectorXd logits;
  Eigen::VectorXd reference_logits;
  int k;
  std::int64_t step_count = 0;
};

/// Token layout synthesized for each simulated response.
struct LayoutSpec {
  int candidate_len = 1;
  int reasoning_len = 0;
};

struct Rollout {
  GroupSample group;
  /// Ordered picks per response; pairwise distinct within a response.
  std::vector<std::vector<int>> chosen_items;
  /// log pi_old of each pick given the earlier picks.
  std::vector<Eigen::VectorXd> old_log_probs;
};

/// Deterministic 64-bit seed mixing (splitmix64 finalizer).
std::uint64_t mixSeed(std::uint64_t seed, std::uint64_t stream);

Rollout sampleRollout(const PolicyState& policy, const Environment& env, int group_size, std::uint64_t rng_seed,
                      const LayoutSpec& layout = {});

/// Probabilities of the next pick given the items already chosen
/// (zero on excluded items).
Eigen::VectorXd pickDistribution(const Eigen::VectorXd& logits, const std::vector<bool>& excluded);

/// KL(softmax(a) || softmax(b)) over the non-excluded items.
double restrictedKl(const Eigen::VectorXd& logits, const Eigen::VectorXd& reference,
                    const std::vector<bool>& excluded);

struct SurrogateGradient {
  double objective = 0.0;
  Eigen::VectorXd gradient;
};

/// Objective of the clipped surrogate at `logits` for a fixed rollout, with
/// its exact gradient. Each candidate token inherits the ratio and the
/// per-pick KL of its pick; reasoning tokens carry ratio 1 and no KL.
SurrogateGradient surrogateGradient(const Eigen::VectorXd& logits, const Eigen::VectorXd& reference_logits,
                                    const Rollout& rollout, const AdvantageTensor& adv, double clip_eps,
                                    double kl_coef);

PolicyState policyGradientStep(const PolicyState& policy, const Rollout& rollout, const AdvantageTensor& adv,
                               double lr, double clip_eps, double kl_coef);

struct Hyper {
  double lr = 0.1;
  double clip_eps = 0.2;
  double kl_coef = 0.01;
  int group_size = 4;
  int inner_epochs = 1;
  LayoutSpec layout;
  PenaltyConfig penalty;
  PenaltyMode penalty_mode = PenaltyMode::TokenLevel;
};

struct TraceRow {
  std::int64_t step = 0;
  Scheme scheme = Scheme::Grpo;
  std::uint64_t seed = 0;
  double mean_set_reward = 0.0;
  double greedy_set_reward = 0.0;
  double kl_to_reference = 0.0;
  double wall_ms = 0.0;
};

using TrainingTrace = std::vector<TraceRow>;

/// Top-k items by logit, ties broken toward the lower index.
std::vector<int> greedySet(const Eigen::VectorXd& logits, int k);
double greedySetReward(const PolicyState& policy, const Environment& env);

/// KL(softmax(logits) || softmax(reference)) over all items.
double klToReference(const PolicyState& policy);

/// Advantages for a rollout under `scheme`, with the optional length penalty.
AdvantageTensor schemeAdvantages(Scheme scheme, const Rollout& rollout, const Hyper& hyper);

/// One row per step 1..steps. `policy` is updated in place.
TrainingTrace train(PolicyState& policy, const Environment& env, Scheme scheme, int steps, const Hyper& hyper,
                    std::uint64_t rng_seed, bool record_wall_ms = false);

/// For k = 1..max_k, the mean over responses of the best utility among the
/// first k picks.
Eigen::VectorXd firstKRewardCurve(const Environment& env, const Rollout& rollout, int max_k);

}  // namespace shapegrpo
