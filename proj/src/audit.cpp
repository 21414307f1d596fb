#include "shapegrpo/audit.hpp"

#include "shapegrpo/advantage.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <stdexcept>

namespace shapegrpo {

bool AuditReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed(); });
}

std::string AuditReport::format() const {
  std::string out;
  char line[256];
  for (const auto& c : checks) {
    std::snprintf(line, sizeof line, "%-4s %-24s cases=%-6d max_residual=%.3e tol=%.1e\n", c.passed() ? "PASS" : "FAIL",
                  c.name.c_str(), c.cases, c.max_residual, c.tolerance);
    out += line;
  }
  out += passed() ? "audit: all checks passed\n" : "audit: FAILED\n";
  return out;
}

namespace {

using Rng = std::mt19937_64;

double maxAbs(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).cwiseAbs().maxCoeff(); }

// Rewards drawn from a coarse grid half of the time so ties and zeros occur.
Rewards randomRewards(Rng& rng, int k, bool allow_negative) {
  std::uniform_real_distribution<double> cont(allow_negative ? -1.0 : 0.0, 1.0);
  std::uniform_int_distribution<int> grid(allow_negative ? -2 : 0, 4);
  std::bernoulli_distribution coarse(0.5);
  Eigen::VectorXd r(k);
  for (auto& v : r) v = coarse(rng) ? 0.25 * grid(rng) : cont(rng);
  return Rewards(std::move(r));
}

CoalitionGame<double> randomGame(Rng& rng, int k) {
  std::normal_distribution<double> normal(0.0, 1.0);
  return CoalitionGame<double>::tabulate(k, [&](Mask s) { return s == 0 ? 0.0 : normal(rng); });
}

class Checker {
 public:
  explicit Checker(const AuditOptions& o) : opts_(o), rng_(o.seed) {}

  ShapleyVector<double> closedForm(const Rewards& r) const {
    ShapleyVector<double> phi = closedFormMaxShapley(r);
    if (opts_.inject_fault) phi(0) += 1e-3;
    return phi;
  }

  int randomK(int cap) {
    std::uniform_int_distribution<int> d(1, std::min(cap, opts_.max_k));
    return d(rng_);
  }

  CheckResult goldenCase() {
    CheckResult c{"golden_case", 1, 0.0, 1e-12};
    const ResponseLayout layout = ResponseLayout::contiguous(1, {1, 1, 1});
    TokenRewardVector got = shapeTokenRewards(layout, Rewards{5.0, 4.0, 3.0});
    if (opts_.inject_fault) got(1) += 3.0 * 1e-3;
    Eigen::VectorXd want(4);
    want << 5.0, 7.5, 4.5, 3.0;
    c.max_residual = maxAbs(got, want);
    return c;
  }

  CheckResult oracleEquivalence() {
    CheckResult c{"oracle_equivalence", opts_.trials, 0.0, 1e-9};
    for (int t = 0; t < opts_.trials; ++t) {
      const Rewards r = randomRewards(rng_, randomK(10), t % 4 == 0);
      c.max_residual = std::max(c.max_residual, maxAbs(closedForm(r), bruteForceShapley(maxGameFromRewards(r))));
    }
    return c;
  }

  CheckResult efficiency() {
    CheckResult c{"efficiency", 2 * opts_.trials, 0.0, 1e-9};
    for (int t = 0; t < opts_.trials; ++t) {
      const auto game = randomGame(rng_, randomK(8));
      c.max_residual = std::max(c.max_residual, std::abs(bruteForceShapley(game).sum() - game.value(game.fullMask())));
      const Rewards r = randomRewards(rng_, randomK(12), false);
      c.max_residual = std::max(c.max_residual, std::abs(closedForm(r).sum() - r.setReward()));
    }
    return c;
  }

  CheckResult symmetry() {
    CheckResult c{"symmetry", 2 * opts_.trials, 0.0, 1e-9};
    if (opts_.max_k < 2) {
      c.cases = 0;
      return c;
    }
    for (int t = 0; t < opts_.trials; ++t) {
      const int k = std::max(2, randomK(8));
      // Symmetrize a random game in players 0 and 1.
      const auto base = randomGame(rng_, k);
      auto swap01 = [](Mask s) {
        const Mask b0 = s & 1u, b1 = (s >> 1) & 1u;
        return (s & ~Mask{3}) | (b0 << 1) | b1;
      };
      const auto game = CoalitionGame<double>::tabulate(
          k, [&](Mask s) { return 0.5 * (base.value(s) + base.value(swap01(s))); });
      const auto phi = bruteForceShapley(game);
      c.max_residual = std::max(c.max_residual, std::abs(phi(0) - phi(1)));

      // Max-game with a duplicated reward.
      Eigen::VectorXd v = randomRewards(rng_, k, false).values();
      std::uniform_int_distribution<int> pick(0, k - 1);
      const int a = pick(rng_);
      int b = pick(rng_);
      if (b == a) b = (a + 1) % k;
      v(b) = v(a);
      const auto phi_max = closedForm(Rewards(v));
      c.max_residual = std::max(c.max_residual, std::abs(phi_max(a) - phi_max(b)));
    }
    return c;
  }

  CheckResult additivity() {
    CheckResult c{"additivity", opts_.trials, 0.0, 1e-9};
    for (int t = 0; t < opts_.trials; ++t) {
      const int k = randomK(8);
      const auto g1 = randomGame(rng_, k);
      const auto g2 = randomGame(rng_, k);
      c.max_residual = std::max(c.max_residual, maxAbs(bruteForceShapley(g1 + g2), bruteForceShapley(g1) + bruteForceShapley(g2)));
    }
    return c;
  }

  CheckResult nullPlayer() {
    CheckResult c{"null_player", 2 * opts_.trials, 0.0, 1e-9};
    for (int t = 0; t < opts_.trials; ++t) {
      const int k = randomK(8);
      std::uniform_int_distribution<int> pick(0, k - 1);
      const int null_player = pick(rng_);
      const Mask bit = Mask{1} << null_player;
      const auto base = randomGame(rng_, k);
      const auto game = CoalitionGame<double>::tabulate(k, [&](Mask s) { return base.value(s & ~bit); });
      c.max_residual = std::max(c.max_residual, std::abs(bruteForceShapley(game)(null_player)));

      Eigen::VectorXd v = randomRewards(rng_, k, false).values();
      v(null_player) = 0.0;
      c.max_residual = std::max(c.max_residual, std::abs(closedForm(Rewards(v))(null_player)));
    }
    return c;
  }

  CheckResult permutationInvariance() {
    CheckResult c{"permutation_invariance", opts_.trials, 0.0, 1e-12};
    for (int t = 0; t < opts_.trials; ++t) {
      const int k = randomK(12);
      const Rewards r = randomRewards(rng_, k, t % 3 == 0);
      std::vector<int> perm(static_cast<std::size_t>(k));
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng_);
      Eigen::VectorXd permuted(k);
      for (int j = 0; j < k; ++j) permuted(j) = r[perm[static_cast<std::size_t>(j)]];
      const auto phi = closedFormMaxShapley(r);
      const auto phi_p = closedFormMaxShapley(Rewards(permuted));
      for (int j = 0; j < k; ++j) {
        c.max_residual = std::max(c.max_residual, std::abs(phi_p(j) - phi(perm[static_cast<std::size_t>(j)])));
      }
    }
    return c;
  }

  // Also fills binaryConsistency(): binaryMaxShapley against the closed form.
  CheckResult binaryRule() {
    CheckResult c{"binary_rule", 0, 0.0, 0.0};
    for (int k = 1; k <= opts_.max_k; ++k) {
      for (Mask mask = 0; mask < (Mask{1} << k); ++mask) {
        ++c.cases;
        Eigen::VectorXd r(k);
        std::vector<bool> correct(static_cast<std::size_t>(k));
        for (int j = 0; j < k; ++j) {
          correct[static_cast<std::size_t>(j)] = (mask >> j) & 1u;
          r(j) = correct[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
        }
        const int m = std::popcount(mask);
        const auto layout = ResponseLayout::contiguous(0, std::vector<int>(static_cast<std::size_t>(k), 1));
        const TokenRewardVector tok = shapeTokenRewards(layout, Rewards(r));
        const ShapleyVector<double> bin = binaryMaxShapley(correct);
        const ShapleyVector<double> closed = closedForm(Rewards(r));
        for (int j = 0; j < k; ++j) {
          const double want = correct[static_cast<std::size_t>(j)] ? static_cast<double>(k) / m : 0.0;
          c.max_residual = std::max(c.max_residual, std::abs(tok(j) - want));
          consistency.max_residual = std::max(consistency.max_residual, std::abs(bin(j) - closed(j)));
        }
      }
    }
    consistency.cases = c.cases;
    return c;
  }

  CheckResult binaryConsistency() const { return consistency; }

  GroupSample randomGroup(int g, bool equal_lengths) {
    std::uniform_int_distribution<int> len(1, 4), wlen(0, 5);
    std::vector<Response> responses;
    const int k = randomK(6);
    for (int i = 0; i < g; ++i) {
      std::vector<int> lengths(static_cast<std::size_t>(k));
      const int shared = len(rng_);
      for (auto& l : lengths) l = equal_lengths ? shared : len(rng_);
      responses.push_back({ResponseLayout::contiguous(wlen(rng_), lengths), randomRewards(rng_, k, false)});
    }
    return GroupSample(std::move(responses));
  }

  CheckResult propositionOne() {
    CheckResult c{"reweighting_identity", opts_.trials, 0.0, 1e-9};
    std::uniform_int_distribution<int> gsize(1, 8);
    for (int t = 0; t < opts_.trials; ++t) {
      const GroupSample group = randomGroup(gsize(rng_), true);
      const auto grpo = normalize(group, allocate(Scheme::Grpo, group));
      const auto shape = normalize(group, allocate(Scheme::Shape, group));
      for (std::size_t i = 0; i < grpo.size(); ++i) {
        c.max_residual = std::max(c.max_residual, std::abs(grpo[i].sum() - shape[i].sum()));
      }
    }
    return c;
  }

  CheckResult propositionTwo() {
    CheckResult c{"zero_reward_sign", opts_.trials, 0.0, 0.0};
    std::uniform_int_distribution<int> gsize(1, 8);
    for (int t = 0; t < opts_.trials; ++t) {
      const GroupSample group = randomGroup(gsize(rng_), false);
      const auto shape = normalize(group, allocate(Scheme::Shape, group));
      for (int i = 0; i < group.size(); ++i) {
        const auto& layout = group[i].layout;
        for (int tok = 0; tok < layout.totalLength(); ++tok) {
          const int j = layout.owner(tok);
          if (j >= 0 && group[i].rewards[j] == 0.0) {
            c.max_residual = std::max(c.max_residual, shape[static_cast<std::size_t>(i)](tok));
          }
        }
      }
    }
    return c;
  }

  CheckResult sharedNormalization() {
    CheckResult c{"shared_normalization", opts_.trials, 0.0, 0.0};
    std::uniform_int_distribution<int> gsize(1, 8);
    for (int t = 0; t < opts_.trials; ++t) {
      const GroupSample group = randomGroup(gsize(rng_), false);
      const GroupStats s = groupStats(group);
      // With token rewards equal to R(o_i), normalization must reproduce (R - mean)/std.
      const auto grpo = normalize(group, allocate(Scheme::Grpo, group));
      const auto r = group.setRewards();
      for (int i = 0; i < group.size(); ++i) {
        const double want = (r(i) - s.mean) / s.std;
        c.max_residual = std::max(c.max_residual, (grpo[static_cast<std::size_t>(i)].array() - want).abs().maxCoeff());
      }
    }
    return c;
  }

 private:
  AuditOptions opts_;
  Rng rng_;
  CheckResult consistency{"binary_consistency", 0, 0.0, 1e-12};
};

}  // namespace

AuditReport runAudit(const AuditOptions& options) {
  if (options.max_k < 1 || options.max_k > 12) throw std::invalid_argument("audit: max_k must lie in [1, 12]");
  if (options.trials < 1) throw std::invalid_argument("audit: trials must be >= 1");
  Checker check(options);
  AuditReport report;
  report.checks.push_back(check.goldenCase());
  report.checks.push_back(check.oracleEquivalence());
  report.checks.push_back(check.efficiency());
  report.checks.push_back(check.symmetry());
  report.checks.push_back(check.additivity());
  report.checks.push_back(check.nullPlayer());
  report.checks.push_back(check.permutationInvariance());
  report.checks.push_back(check.binaryRule());
  report.checks.push_back(check.binaryConsistency());
  report.checks.push_back(check.propositionOne());
  report.checks.push_back(check.propositionTwo());
  report.checks.push_back(check.sharedNormalization());
  return report;
}

}  // namespace shapegrpo
