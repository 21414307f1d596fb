#pragma once

// Exact Shapley values for permutation-invariant candidate games.
//
// Candidates are the players; a game maps every coalition (a bitmask over
// at most kMaxPlayers candidates) to a real value with v(empty) = 0.

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace shapegrpo {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using ShapleyVector = Vector<Scalar>;

using Mask = std::uint32_t;

/// Largest player count accepted by full coalition enumeration.
inline constexpr int kMaxPlayers = 20;

/// Thrown when a game is too large to enumerate.
class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Per-candidate scalar rewards of one response. K >= 1, all finite.
template <typename Scalar>
class CandidateRewards {
 public:
  CandidateRewards() = default;

  explicit CandidateRewards(Vector<Scalar> values) : values_(std::move(values)) {
    if (values_.size() < 1) {
      throw std::invalid_argument("CandidateRewards: at least one candidate is required");
    }
    if (!values_.allFinite()) {
      throw std::invalid_argument("CandidateRewards: rewards must be finite");
    }
  }

  CandidateRewards(std::initializer_list<Scalar> values)
      : CandidateRewards(fromRange(values.begin(), values.end())) {}

  static CandidateRewards fromStd(const std::vector<Scalar>& values) {
    return CandidateRewards(fromRange(values.begin(), values.end()));
  }

  int size() const { return static_cast<int>(values_.size()); }
  Scalar operator[](int j) const { return values_(j); }
  const Vector<Scalar>& values() const { return values_; }

  /// Set-level reward R(o) = max_j R(c^j).
  Scalar setReward() const { return values_.maxCoeff(); }

 private:
  template <typename It>
  static Vector<Scalar> fromRange(It first, It last) {
    Vector<Scalar> v(static_cast<Eigen::Index>(std::distance(first, last)));
    Eigen::Index i = 0;
    for (; first != last; ++first) v(i++) = *first;
    return v;
  }

  Vector<Scalar> values_;
};

/// A set function over K candidates stored as a dense table of 2^K values.
template <typename Scalar>
class CoalitionGame {
 public:
  CoalitionGame(int k, Vector<Scalar> table) : k_(k), table_(std::move(table)) {
    if (k < 1) throw std::invalid_argument("CoalitionGame: k must be >= 1");
    if (k > kMaxPlayers) {
      throw CapacityError("CoalitionGame: k=" + std::to_string(k) + " exceeds the enumeration limit of " +
                          std::to_string(kMaxPlayers));
    }
    if (table_.size() != (Eigen::Index{1} << k)) {
      throw std::invalid_argument("CoalitionGame: table must hold 2^k values");
    }
    if (!table_.allFinite()) throw std::invalid_argument("CoalitionGame: values must be finite");
  }

  /// Builds the table by evaluating `f(mask)` on every coalition.
  template <typename F>
  static CoalitionGame tabulate(int k, F&& f) {
    if (k > kMaxPlayers) {
      throw CapacityError("CoalitionGame: k=" + std::to_string(k) + " exceeds the enumeration limit of " +
                          std::to_string(kMaxPlayers));
    }
    if (k < 1) throw std::invalid_argument("CoalitionGame: k must be >= 1");
    Vector<Scalar> table(Eigen::Index{1} << k);
    for (Mask s = 0; s < (Mask{1} << k); ++s) table(s) = f(s);
    return CoalitionGame(k, std::move(table));
  }

  int players() const { return k_; }
  Mask fullMask() const { return (Mask{1} << k_) - 1; }
  Scalar value(Mask s) const { return table_(s); }
  const Vector<Scalar>& table() const { return table_; }

  friend CoalitionGame operator+(const CoalitionGame& a, const CoalitionGame& b) {
    if (a.k_ != b.k_) throw std::invalid_argument("CoalitionGame: player counts differ");
    return CoalitionGame(a.k_, a.table_ + b.table_);
  }

 private:
  int k_;
  Vector<Scalar> table_;
};

/// Shapley values by enumeration of all coalitions, O(K 2^K).
template <typename Scalar>
ShapleyVector<Scalar> bruteForceShapley(const CoalitionGame<Scalar>& game) {
  const int k = game.players();
  if (k > kMaxPlayers) throw CapacityError("bruteForceShapley: too many players");
  if (game.value(0) != Scalar(0)) {
    throw std::invalid_argument("bruteForceShapley: the empty coalition must have value 0");
  }

  // weight[s] = s! (K-s-1)! / K!
  std::vector<Scalar> weight(static_cast<std::size_t>(k));
  weight[0] = Scalar(1) / Scalar(k);
  for (int s = 0; s + 1 < k; ++s) {
    weight[s + 1] = weight[s] * Scalar(s + 1) / Scalar(k - s - 1);
  }

  ShapleyVector<Scalar> phi = ShapleyVector<Scalar>::Zero(k);
  const Mask full = game.fullMask();
  for (int i = 0; i < k; ++i) {
    const Mask bit = Mask{1} << i;
    const Mask others = full & ~bit;
    // Enumerate all submasks of `others`, including the empty set.
    Mask s = others;
    while (true) {
      const int size = std::popcount(s);
      phi(i) += weight[size] * (game.value(s | bit) - game.value(s));
      if (s == 0) break;
      s = (s - 1) & others;
    }
  }
  return phi;
}

/// The max-game v(S) = max_{j in S} r_j, v(empty) = 0.
template <typename Scalar>
CoalitionGame<Scalar> maxGameFromRewards(const CandidateRewards<Scalar>& rewards) {
  const int k = rewards.size();
  return CoalitionGame<Scalar>::tabulate(k, [&](Mask s) {
    if (s == 0) return Scalar(0);
    Scalar best = -std::numeric_limits<Scalar>::infinity();
    for (int j = 0; j < k; ++j) {
      if (s & (Mask{1} << j)) best = std::max(best, rewards[j]);
    }
    return best;
  });
}

/// Closed-form Shapley values of the max-game, multiplied by `scale`.
///
/// With rewards sorted descending, R_(1) >= ... >= R_(K) and R_(K+1) = 0,
///   scale * phi_(j) = sum_{k=j..K} scale * (R_(k) - R_(k+1)) / k.
/// The scale sits inside the sum so that, e.g., binary rewards with scale K
/// produce exactly K/m. Ties receive bit-identical values.
template <typename Scalar>
ShapleyVector<Scalar> scaledMaxShapley(const CandidateRewards<Scalar>& rewards, Scalar scale) {
  const int k = rewards.size();
  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rewards[a] > rewards[b]; });

  ShapleyVector<Scalar> phi(k);
  Scalar tail = Scalar(0);
  for (int pos = k - 1; pos >= 0; --pos) {
    const Scalar here = rewards[order[pos]];
    const Scalar next = pos + 1 < k ? rewards[order[pos + 1]] : Scalar(0);
    tail += scale * (here - next) / Scalar(pos + 1);
    phi(order[pos]) = tail;
  }
  return phi;
}

/// Closed-form Shapley values of the max-game (unscaled).
template <typename Scalar>
ShapleyVector<Scalar> closedFormMaxShapley(const CandidateRewards<Scalar>& rewards) {
  return scaledMaxShapley(rewards, Scalar(1));
}

/// Binary max-game: each of the m correct candidates gets 1/m, others 0.
template <typename Scalar = double>
ShapleyVector<Scalar> binaryMaxShapley(const std::vector<bool>& correct) {
  const auto k = static_cast<Eigen::Index>(correct.size());
  const auto m = std::count(correct.begin(), correct.end(), true);
  ShapleyVector<Scalar> phi = ShapleyVector<Scalar>::Zero(k);
  if (m == 0) return phi;
  const Scalar share = Scalar(1) / Scalar(m);
  for (Eigen::Index j = 0; j < k; ++j) {
    if (correct[static_cast<std::size_t>(j)]) phi(j) = share;
  }
  return phi;
}

}  // namespace shapegrpo
