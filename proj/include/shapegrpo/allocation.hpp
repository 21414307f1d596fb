#pragma once

// Token-level reward construction for a single multi-candidate response.

#include "shapegrpo/shapley.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace shapegrpo {

using Rewards = CandidateRewards<double>;
using TokenRewardVector = Eigen::VectorXd;

struct Span {
  int begin = 0;
  int length = 0;
  int end() const { return begin + length; }
  bool operator==(const Span&) const = default;
};

/// Decomposition of a response o = w + {c^1..c^K} into token spans.
/// Candidate spans are ordered and disjoint; every other token is reasoning.
class ResponseLayout {
 public:
  ResponseLayout(int total_len, std::vector<Span> candidate_spans);

  /// Reasoning run of `reasoning_len` tokens followed by the candidates.
  static ResponseLayout contiguous(int reasoning_len, const std::vector<int>& candidate_lengths);

  int totalLength() const { return total_len_; }
  int reasoningLength() const { return reasoning_len_; }
  int candidates() const { return static_cast<int>(spans_.size()); }
  const std::vector<Span>& spans() const { return spans_; }

  /// Candidate index owning token t, or -1 for reasoning tokens.
  int owner(int t) const { return owner_[static_cast<std::size_t>(t)]; }

  bool equalCandidateLengths() const;

  bool operator==(const ResponseLayout& o) const {
    return total_len_ == o.total_len_ && spans_ == o.spans_;
  }

 private:
  int total_len_;
  int reasoning_len_;
  std::vector<Span> spans_;
  std::vector<int> owner_;
};

enum class Scheme { Grpo, Shape, Wta };

std::string_view toString(Scheme s);
Scheme schemeFromString(std::string_view name);

/// GRPO: every token receives R(o).
TokenRewardVector grpoTokenRewards(const ResponseLayout& layout, const Rewards& rewards);

/// ShapE: reasoning tokens receive max(R(o), 0); tokens of c^j receive K * phi^j.
TokenRewardVector shapeTokenRewards(const ResponseLayout& layout, const Rewards& rewards);

/// Winner-takes-all: reasoning as ShapE; the top candidates split K * R(o) evenly.
TokenRewardVector wtaTokenRewards(const ResponseLayout& layout, const Rewards& rewards);

TokenRewardVector tokenRewards(Scheme scheme, const ResponseLayout& layout, const Rewards& rewards);

struct PenaltyConfig {
  int target_len = 2048;
  bool enabled = false;
};

enum class PenaltyMode { TokenLevel, SequenceLevel };

std::string_view toString(PenaltyMode m);
PenaltyMode penaltyModeFromString(std::string_view name);

/// Overlength penalty p = max(|w| - target, 0) / target. Token mode subtracts
/// p from each reasoning token past the target; sequence mode from every token.
TokenRewardVector applyLengthPenalty(const TokenRewardVector& base, const ResponseLayout& layout,
                                     const PenaltyConfig& cfg, PenaltyMode mode);

enum class Tokenizer { Whitespace, Character };

struct Markers {
  std::string open = "<c>";
  std::string close = "</c>";
};

class LayoutParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A tokenized transcript with marker tokens removed.
struct ParsedTranscript {
  ResponseLayout layout;
  std::vector<std::string> tokens;
};

ParsedTranscript parseTranscript(std::string_view transcript, const Markers& markers, Tokenizer tokenizer);

inline ResponseLayout parseLayout(std::string_view transcript, const Markers& markers = {},
                                  Tokenizer tokenizer = Tokenizer::Whitespace) {
  return parseTranscript(transcript, markers, tokenizer).layout;
}

/// Inverse of parseTranscript up to whitespace normalization.
std::string renderTranscript(const ParsedTranscript& parsed, const Markers& markers, Tokenizer tokenizer);

/// Raw token sequence of a transcript, marker tokens included.
std::vector<std::string> tokenize(std::string_view transcript, const Markers& markers, Tokenizer tokenizer);

}  // namespace shapegrpo
