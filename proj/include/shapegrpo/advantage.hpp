#pragma once

// Group-relative normalization and the clipped surrogate.

#include "shapegrpo/allocation.hpp"

#include <vector>

namespace shapegrpo {

struct Response {
  ResponseLayout layout;
  Rewards rewards;
};

/// G responses sampled for one prompt.
class GroupSample {
 public:
  explicit GroupSample(std::vector<Response> responses);

  int size() const { return static_cast<int>(responses_.size()); }
  const Response& operator[](int i) const { return responses_[static_cast<std::size_t>(i)]; }
  const std::vector<Response>& responses() const { return responses_; }

  /// Sequence-level rewards R(o_i).
  Eigen::VectorXd setRewards() const;

 private:
  std::vector<Response> responses_;
};

/// One real per token, per response.
using PerToken = std::vector<Eigen::VectorXd>;
using AdvantageTensor = PerToken;

struct GroupStats {
  double mean = 0.0;
  double std = 1.0;
};

/// Standard deviations below this are treated as identical rewards.
inline constexpr double kStdClamp = 1e-6;

/// Mean and population std of R(o_i); std clamps to 1 for identical rewards
/// and the mean is 0 for a singleton group.
GroupStats groupStats(const GroupSample& group);

/// (token reward - mean) / std with the group's sequence-level statistics.
AdvantageTensor normalize(const GroupSample& group, const PerToken& token_rewards);

/// Token rewards for every response under `scheme`.
PerToken allocate(Scheme scheme, const GroupSample& group);

struct SurrogateResult {
  double objective = 0.0;
  /// Coefficient on d(ratio)/d(theta): A where the unclipped product is the
  /// minimum, 0 where the clipped branch binds.
  PerToken grad_weight;
};

/// mean_i (1/|o_i|) sum_t [min(r A, clip(r, 1-eps, 1+eps) A) - beta kl].
SurrogateResult surrogateSignal(const AdvantageTensor& adv, const PerToken& ratios, double clip_eps, double kl_coef,
                                const PerToken& kl_terms);

}  // namespace shapegrpo
