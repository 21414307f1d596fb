#include "shapegrpo/bandit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace shapegrpo {

Environment::Environment(Eigen::VectorXd utilities, double noise_std, double r_max)
    : utilities_(std::move(utilities)), noise_std_(noise_std), r_max_(r_max) {
  if (utilities_.size() < 1) throw std::invalid_argument("Environment: n_items must be >= 1");
  if (!(r_max_ > 0.0)) throw std::invalid_argument("Environment: r_max must be positive");
  if (!(noise_std_ >= 0.0) || !std::isfinite(noise_std_)) {
    throw std::invalid_argument("Environment: noise_std must be non-negative");
  }
  if (!utilities_.allFinite() || (utilities_.array() < 0.0).any() || (utilities_.array() > r_max_).any()) {
    throw std::invalid_argument("Environment: utilities must lie in [0, r_max]");
  }
}

Environment Environment::binary(int n_items, const std::vector<int>& correct_items) {
  if (n_items < 1) throw std::invalid_argument("Environment: n_items must be >= 1");
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n_items);
  for (int item : correct_items) {
    if (item < 0 || item >= n_items) throw std::invalid_argument("Environment: correct item index out of range");
    u(item) = 1.0;
  }
  Environment env(std::move(u), 0.0, 1.0);
  env.binary_ = true;
  return env;
}

PolicyState::PolicyState(Eigen::VectorXd init_logits, int k_)
    : logits(std::move(init_logits)), reference_logits(logits), k(k_) {
  if (k < 1) throw std::invalid_argument("PolicyState: k must be >= 1");
  if (k > logits.size()) throw std::invalid_argument("PolicyState: k cannot exceed the number of items");
  if (!logits.allFinite()) throw std::invalid_argument("PolicyState: logits must be finite");
}

std::uint64_t mixSeed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

double restrictedLogSumExp(const Eigen::VectorXd& logits, const std::vector<bool>& excluded) {
  double hi = -std::numeric_limits<double>::infinity();
  for (Eigen::Index a = 0; a < logits.size(); ++a) {
    if (!excluded[static_cast<std::size_t>(a)]) hi = std::max(hi, logits(a));
  }
  double sum = 0.0;
  for (Eigen::Index a = 0; a < logits.size(); ++a) {
    if (!excluded[static_cast<std::size_t>(a)]) sum += std::exp(logits(a) - hi);
  }
  return hi + std::log(sum);
}

}  // namespace

Eigen::VectorXd pickDistribution(const Eigen::VectorXd& logits, const std::vector<bool>& excluded) {
  const double lse = restrictedLogSumExp(logits, excluded);
  Eigen::VectorXd p(logits.size());
  for (Eigen::Index a = 0; a < logits.size(); ++a) {
    p(a) = excluded[static_cast<std::size_t>(a)] ? 0.0 : std::exp(logits(a) - lse);
  }
  return p;
}

double restrictedKl(const Eigen::VectorXd& logits, const Eigen::VectorXd& reference,
                    const std::vector<bool>& excluded) {
  const double lse_p = restrictedLogSumExp(logits, excluded);
  const double lse_q = restrictedLogSumExp(reference, excluded);
  double kl = 0.0;
  for (Eigen::Index a = 0; a < logits.size(); ++a) {
    if (excluded[static_cast<std::size_t>(a)]) continue;
    const double log_p = logits(a) - lse_p;
    kl += std::exp(log_p) * (log_p - (reference(a) - lse_q));
  }
  return std::max(kl, 0.0);
}

Rollout sampleRollout(const PolicyState& policy, const Environment& env, int group_size, std::uint64_t rng_seed,
                      const LayoutSpec& layout) {
  if (group_size < 1) throw std::invalid_argument("sampleRollout: group size must be >= 1");
  if (policy.logits.size() != env.items()) throw std::invalid_argument("sampleRollout: policy/environment size mismatch");
  if (layout.candidate_len < 1 || layout.reasoning_len < 0) throw std::invalid_argument("sampleRollout: bad layout");

  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  const int n = env.items();
  const int k = policy.k;
  const ResponseLayout response_layout =
      ResponseLayout::contiguous(layout.reasoning_len, std::vector<int>(static_cast<std::size_t>(k), layout.candidate_len));

  std::vector<Response> responses;
  std::vector<std::vector<int>> chosen(static_cast<std::size_t>(group_size));
  std::vector<Eigen::VectorXd> log_probs(static_cast<std::size_t>(group_size), Eigen::VectorXd(k));
  for (int i = 0; i < group_size; ++i) {
    std::vector<bool> excluded(static_cast<std::size_t>(n), false);
    Eigen::VectorXd rewards(k);
    auto& picks = chosen[static_cast<std::size_t>(i)];
    for (int j = 0; j < k; ++j) {
      const Eigen::VectorXd p = pickDistribution(policy.logits, excluded);
      const double u = uniform(rng);
      double acc = 0.0;
      int item = -1;
      for (int a = 0; a < n; ++a) {
        if (excluded[static_cast<std::size_t>(a)]) continue;
        item = a;
        acc += p(a);
        if (u < acc) break;
      }
      excluded[static_cast<std::size_t>(item)] = true;
      picks.push_back(item);
      log_probs[static_cast<std::size_t>(i)](j) = std::log(p(item));
      double r = env.utilities()(item);
      if (env.noiseStd() > 0.0) r = std::max(0.0, r + env.noiseStd() * noise(rng));
      rewards(j) = r;
    }
    responses.push_back({response_layout, Rewards(std::move(rewards))});
  }
  return {GroupSample(std::move(responses)), std::move(chosen), std::move(log_probs)};
}

SurrogateGradient surrogateGradient(const Eigen::VectorXd& logits, const Eigen::VectorXd& reference_logits,
                                    const Rollout& rollout, const AdvantageTensor& adv, double clip_eps,
                                    double kl_coef) {
  const GroupSample& group = rollout.group;
  const int g = group.size();
  if (static_cast<int>(adv.size()) != g || static_cast<int>(rollout.chosen_items.size()) != g) {
    throw std::invalid_argument("surrogateGradient: advantage tensor does not match the rollout");
  }
  const auto n = logits.size();
  if (reference_logits.size() != n) throw std::invalid_argument("surrogateGradient: reference size mismatch");

  PerToken ratios(static_cast<std::size_t>(g));
  PerToken kls(static_cast<std::size_t>(g));
  // Per response, per pick: the pick's distribution and its score/KL gradients.
  std::vector<std::vector<Eigen::VectorXd>> score(static_cast<std::size_t>(g));
  std::vector<std::vector<Eigen::VectorXd>> kl_grad(static_cast<std::size_t>(g));
  std::vector<Eigen::VectorXd> pick_ratio(static_cast<std::size_t>(g));

  for (int i = 0; i < g; ++i) {
    const auto si = static_cast<std::size_t>(i);
    const ResponseLayout& layout = group[i].layout;
    const auto& picks = rollout.chosen_items[si];
    if (adv[si].size() != layout.totalLength() || static_cast<int>(picks.size()) != layout.candidates()) {
      throw std::invalid_argument("surrogateGradient: response " + std::to_string(i) + " shape mismatch");
    }
    const int k = layout.candidates();
    std::vector<bool> excluded(static_cast<std::size_t>(n), false);
    Eigen::VectorXd pick_kl(k);
    pick_ratio[si].resize(k);
    for (int j = 0; j < k; ++j) {
      const Eigen::VectorXd p = pickDistribution(logits, excluded);
      const Eigen::VectorXd q = pickDistribution(reference_logits, excluded);
      const int item = picks[static_cast<std::size_t>(j)];
      pick_ratio[si](j) = std::exp(std::log(p(item)) - rollout.old_log_probs[si](j));

      Eigen::VectorXd s = -p;
      s(item) += 1.0;
      score[si].push_back(std::move(s));

      const double kl = restrictedKl(logits, reference_logits, excluded);
      pick_kl(j) = kl;
      Eigen::VectorXd dkl = Eigen::VectorXd::Zero(n);
      for (Eigen::Index a = 0; a < n; ++a) {
        if (p(a) > 0.0) dkl(a) = p(a) * (std::log(p(a)) - std::log(q(a)) - kl);
      }
      kl_grad[si].push_back(std::move(dkl));
      excluded[static_cast<std::size_t>(item)] = true;
    }

    ratios[si] = Eigen::VectorXd::Ones(layout.totalLength());
    kls[si] = Eigen::VectorXd::Zero(layout.totalLength());
    for (int t = 0; t < layout.totalLength(); ++t) {
      const int j = layout.owner(t);
      if (j < 0) continue;
      ratios[si](t) = pick_ratio[si](j);
      kls[si](t) = pick_kl(j);
    }
  }

  const SurrogateResult sur = surrogateSignal(adv, ratios, clip_eps, kl_coef, kls);

  SurrogateGradient out{sur.objective, Eigen::VectorXd::Zero(n)};
  for (int i = 0; i < g; ++i) {
    const auto si = static_cast<std::size_t>(i);
    const ResponseLayout& layout = group[i].layout;
    const double norm = 1.0 / (static_cast<double>(g) * layout.totalLength());
    for (int j = 0; j < layout.candidates(); ++j) {
      const Span& span = layout.spans()[static_cast<std::size_t>(j)];
      const double w = sur.grad_weight[si].segment(span.begin, span.length).sum();
      out.gradient += norm * (w * pick_ratio[si](j) * score[si][static_cast<std::size_t>(j)] -
                              kl_coef * span.length * kl_grad[si][static_cast<std::size_t>(j)]);
    }
  }
  return out;
}

PolicyState policyGradientStep(const PolicyState& policy, const Rollout& rollout, const AdvantageTensor& adv,
                               double lr, double clip_eps, double kl_coef) {
  if (!(lr > 0.0)) throw std::invalid_argument("policyGradientStep: lr must be positive");
  const SurrogateGradient sg =
      surrogateGradient(policy.logits, policy.reference_logits, rollout, adv, clip_eps, kl_coef);
  PolicyState next = policy;
  next.logits += lr * sg.gradient;
  next.step_count += 1;
  return next;
}

std::vector<int> greedySet(const Eigen::VectorXd& logits, int k) {
  std::vector<int> idx(static_cast<std::size_t>(logits.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return logits(a) > logits(b); });
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

double greedySetReward(const PolicyState& policy, const Environment& env) {
  double best = 0.0;
  for (int item : greedySet(policy.logits, policy.k)) best = std::max(best, env.utilities()(item));
  return best;
}

double klToReference(const PolicyState& policy) {
  return restrictedKl(policy.logits, policy.reference_logits,
                      std::vector<bool>(static_cast<std::size_t>(policy.logits.size()), false));
}

AdvantageTensor schemeAdvantages(Scheme scheme, const Rollout& rollout, const Hyper& hyper) {
  PerToken rewards = allocate(scheme, rollout.group);
  if (hyper.penalty.enabled) {
    for (int i = 0; i < rollout.group.size(); ++i) {
      auto& r = rewards[static_cast<std::size_t>(i)];
      r = applyLengthPenalty(r, rollout.group[i].layout, hyper.penalty, hyper.penalty_mode);
    }
  }
  return normalize(rollout.group, rewards);
}

TrainingTrace train(PolicyState& policy, const Environment& env, Scheme scheme, int steps, const Hyper& hyper,
                    std::uint64_t rng_seed, bool record_wall_ms) {
  if (steps < 1) throw std::invalid_argument("train: steps must be >= 1");
  if (hyper.inner_epochs < 1) throw std::invalid_argument("train: inner_epochs must be >= 1");

  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  TrainingTrace trace;
  trace.reserve(static_cast<std::size_t>(steps));
  for (int step = 1; step <= steps; ++step) {
    const Rollout rollout =
        sampleRollout(policy, env, hyper.group_size, mixSeed(rng_seed, static_cast<std::uint64_t>(step)), hyper.layout);
    const AdvantageTensor adv = schemeAdvantages(scheme, rollout, hyper);
    for (int epoch = 0; epoch < hyper.inner_epochs; ++epoch) {
      policy = policyGradientStep(policy, rollout, adv, hyper.lr, hyper.clip_eps, hyper.kl_coef);
    }

    TraceRow row;
    row.step = step;
    row.scheme = scheme;
    row.seed = rng_seed;
    row.mean_set_reward = rollout.group.setRewards().mean();
    row.greedy_set_reward = greedySetReward(policy, env);
    row.kl_to_reference = klToReference(policy);
    if (record_wall_ms) {
      row.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    }
    trace.push_back(row);
  }
  return trace;
}

Eigen::VectorXd firstKRewardCurve(const Environment& env, const Rollout& rollout, int max_k) {
  const int g = rollout.group.size();
  const int k = rollout.group[0].layout.candidates();
  if (max_k < 1 || max_k > k) throw std::invalid_argument("firstKRewardCurve: max_k must lie in [1, K]");
  Eigen::VectorXd curve = Eigen::VectorXd::Zero(max_k);
  for (const auto& picks : rollout.chosen_items) {
    double best = 0.0;
    for (int j = 0; j < max_k; ++j) {
      best = std::max(best, env.utilities()(picks[static_cast<std::size_t>(j)]));
      curve(j) += best;
    }
  }
  return curve / static_cast<double>(g);
}

}  // namespace shapegrpo
