#pragma once

// Test-only reference computations, written independently of the library
// code paths they check.

#include "shapegrpo/bandit.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

namespace oracle {

using shapegrpo::Mask;

/// Shapley values as the average marginal contribution over all K! join orders.
inline Eigen::VectorXd permutationShapley(int k, const std::function<double(Mask)>& value) {
  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(k);
  long count = 0;
  do {
    Mask coalition = 0;
    for (int player : order) {
      const Mask with = coalition | (Mask{1} << player);
      phi(player) += value(with) - value(coalition);
      coalition = with;
    }
    ++count;
  } while (std::next_permutation(order.begin(), order.end()));
  return phi / static_cast<double>(count);
}

inline std::function<double(Mask)> maxGame(const shapegrpo::Rewards& r) {
  return [r](Mask s) {
    if (s == 0) return 0.0;
    double best = -1e300;
    for (int j = 0; j < r.size(); ++j) {
      if (s & (Mask{1} << j)) best = std::max(best, r[j]);
    }
    return best;
  };
}

/// The clipped surrogate evaluated from scratch at `logits`.
inline double surrogateObjective(const Eigen::VectorXd& logits, const Eigen::VectorXd& ref,
                                 const shapegrpo::Rollout& rollout, const shapegrpo::AdvantageTensor& adv,
                                 double eps, double beta) {
  const int g = rollout.group.size();
  const auto n = logits.size();
  double total = 0.0;
  for (int i = 0; i < g; ++i) {
    const auto& layout = rollout.group[i].layout;
    const auto& picks = rollout.chosen_items[static_cast<std::size_t>(i)];
    std::vector<double> ratio(picks.size()), kl(picks.size());
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    for (std::size_t j = 0; j < picks.size(); ++j) {
      double zp = 0.0, zq = 0.0;
      for (Eigen::Index a = 0; a < n; ++a) {
        if (used[static_cast<std::size_t>(a)]) continue;
        zp += std::exp(logits(a));
        zq += std::exp(ref(a));
      }
      double d = 0.0;
      for (Eigen::Index a = 0; a < n; ++a) {
        if (used[static_cast<std::size_t>(a)]) continue;
        const double p = std::exp(logits(a)) / zp;
        const double q = std::exp(ref(a)) / zq;
        d += p * std::log(p / q);
      }
      kl[j] = d;
      const double p_pick = std::exp(logits(picks[j])) / zp;
      ratio[j] = p_pick / std::exp(rollout.old_log_probs[static_cast<std::size_t>(i)](static_cast<Eigen::Index>(j)));
      used[static_cast<std::size_t>(picks[j])] = true;
    }
    double sum = 0.0;
    for (int t = 0; t < layout.totalLength(); ++t) {
      const double a = adv[static_cast<std::size_t>(i)](t);
      const int j = layout.owner(t);
      const double r = j < 0 ? 1.0 : ratio[static_cast<std::size_t>(j)];
      const double clipped = std::min(std::max(r, 1.0 - eps), 1.0 + eps);
      sum += std::min(r * a, clipped * a) - (j < 0 ? 0.0 : beta * kl[static_cast<std::size_t>(j)]);
    }
    total += sum / layout.totalLength();
  }
  return total / g;
}

/// Central finite-difference gradient.
inline Eigen::VectorXd centralDifference(const std::function<double(const Eigen::VectorXd&)>& f,
                                         const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd grad(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd up = x, down = x;
    up(i) += h;
    down(i) -= h;
    grad(i) = (f(up) - f(down)) / (2.0 * h);
  }
  return grad;
}

}  // namespace oracle
