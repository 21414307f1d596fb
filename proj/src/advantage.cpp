#include "shapegrpo/advantage.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace shapegrpo {

GroupSample::GroupSample(std::vector<Response> responses) : responses_(std::move(responses)) {
  if (responses_.empty()) throw std::invalid_argument("GroupSample: group size must be >= 1");
  for (const auto& r : responses_) {
    if (r.layout.candidates() != r.rewards.size()) {
      throw std::invalid_argument("GroupSample: layout and rewards disagree on the candidate count");
    }
  }
}

Eigen::VectorXd GroupSample::setRewards() const {
  Eigen::VectorXd out(size());
  for (int i = 0; i < size(); ++i) out(i) = (*this)[i].rewards.setReward();
  return out;
}

GroupStats groupStats(const GroupSample& group) {
  const Eigen::VectorXd r = group.setRewards();
  const double mean = r.mean();
  const double var = (r.array() - mean).square().mean();
  GroupStats stats;
  stats.std = std::sqrt(var);
  if (stats.std < kStdClamp) stats.std = 1.0;
  stats.mean = group.size() == 1 ? 0.0 : mean;
  return stats;
}

namespace {

void checkShapes(const GroupSample& group, const PerToken& per_token, const char* what) {
  if (static_cast<int>(per_token.size()) != group.size()) {
    throw std::invalid_argument(std::string(what) + ": expected one vector per response");
  }
  for (int i = 0; i < group.size(); ++i) {
    if (per_token[static_cast<std::size_t>(i)].size() != group[i].layout.totalLength()) {
      throw std::invalid_argument(std::string(what) + ": response " + std::to_string(i) +
                                  " length does not match its layout");
    }
  }
}

void checkSameShape(const PerToken& a, const PerToken& b, const char* what) {
  bool ok = a.size() == b.size();
  for (std::size_t i = 0; ok && i < a.size(); ++i) ok = a[i].size() == b[i].size();
  if (!ok) throw std::invalid_argument(std::string("surrogateSignal: ") + what + " shape mismatch");
}

}  // namespace

AdvantageTensor normalize(const GroupSample& group, const PerToken& token_rewards) {
  checkShapes(group, token_rewards, "normalize");
  const GroupStats stats = groupStats(group);
  AdvantageTensor adv;
  adv.reserve(token_rewards.size());
  for (const auto& r : token_rewards) adv.push_back((r.array() - stats.mean) / stats.std);
  return adv;
}

PerToken allocate(Scheme scheme, const GroupSample& group) {
  PerToken out;
  out.reserve(static_cast<std::size_t>(group.size()));
  for (const auto& r : group.responses()) out.push_back(tokenRewards(scheme, r.layout, r.rewards));
  return out;
}

SurrogateResult surrogateSignal(const AdvantageTensor& adv, const PerToken& ratios, double clip_eps, double kl_coef,
                                const PerToken& kl_terms) {
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw std::invalid_argument("surrogateSignal: clip_eps must lie in (0, 1)");
  if (adv.empty()) throw std::invalid_argument("surrogateSignal: empty advantage tensor");
  checkSameShape(adv, ratios, "ratio");
  checkSameShape(adv, kl_terms, "kl");

  SurrogateResult out;
  out.grad_weight.reserve(adv.size());
  double total = 0.0;
  for (std::size_t i = 0; i < adv.size(); ++i) {
    const auto& a = adv[i];
    const auto& r = ratios[i];
    if ((r.array() <= 0.0).any()) throw std::invalid_argument("surrogateSignal: ratios must be positive");
    Eigen::VectorXd weight(a.size());
    double sum = 0.0;
    for (Eigen::Index t = 0; t < a.size(); ++t) {
      const double unclipped = r(t) * a(t);
      const double clipped = std::clamp(r(t), 1.0 - clip_eps, 1.0 + clip_eps) * a(t);
      sum += std::min(unclipped, clipped) - kl_coef * kl_terms[i](t);
      weight(t) = unclipped <= clipped ? a(t) : 0.0;
    }
    if (a.size() > 0) total += sum / static_cast<double>(a.size());
    out.grad_weight.push_back(std::move(weight));
  }
  out.objective = total / static_cast<double>(adv.size());
  return out;
}

}  // namespace shapegrpo
