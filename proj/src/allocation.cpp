#include "shapegrpo/allocation.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace shapegrpo {

ResponseLayout::ResponseLayout(int total_len, std::vector<Span> candidate_spans)
    : total_len_(total_len), reasoning_len_(total_len), spans_(std::move(candidate_spans)) {
  if (total_len_ < 0) throw std::invalid_argument("ResponseLayout: negative total length");
  if (spans_.empty()) throw std::invalid_argument("ResponseLayout: at least one candidate span is required");
  owner_.assign(static_cast<std::size_t>(total_len_), -1);
  int cursor = 0;
  for (std::size_t j = 0; j < spans_.size(); ++j) {
    const Span& s = spans_[j];
    if (s.length < 1) throw std::invalid_argument("ResponseLayout: candidate spans must be non-empty");
    if (s.begin < cursor) throw std::invalid_argument("ResponseLayout: candidate spans must be ordered and disjoint");
    if (s.end() > total_len_) throw std::invalid_argument("ResponseLayout: candidate span exceeds the response");
    for (int t = s.begin; t < s.end(); ++t) owner_[static_cast<std::size_t>(t)] = static_cast<int>(j);
    reasoning_len_ -= s.length;
    cursor = s.end();
  }
}

ResponseLayout ResponseLayout::contiguous(int reasoning_len, const std::vector<int>& candidate_lengths) {
  if (reasoning_len < 0) throw std::invalid_argument("ResponseLayout: negative reasoning length");
  std::vector<Span> spans;
  spans.reserve(candidate_lengths.size());
  int cursor = reasoning_len;
  for (int len : candidate_lengths) {
    spans.push_back({cursor, len});
    cursor += len;
  }
  return ResponseLayout(cursor, std::move(spans));
}

bool ResponseLayout::equalCandidateLengths() const {
  return std::all_of(spans_.begin(), spans_.end(), [&](const Span& s) { return s.length == spans_.front().length; });
}

std::string_view toString(Scheme s) {
  switch (s) {
    case Scheme::Grpo: return "grpo";
    case Scheme::Shape: return "shape";
    case Scheme::Wta: return "wta";
  }
  return "?";
}

Scheme schemeFromString(std::string_view name) {
  if (name == "grpo") return Scheme::Grpo;
  if (name == "shape") return Scheme::Shape;
  if (name == "wta") return Scheme::Wta;
  throw std::invalid_argument("unknown scheme '" + std::string(name) + "' (expected grpo, shape or wta)");
}

namespace {

void checkCandidateCount(const ResponseLayout& layout, const Rewards& rewards) {
  if (layout.candidates() != rewards.size()) {
    throw std::invalid_argument("layout has " + std::to_string(layout.candidates()) + " candidates but " +
                                std::to_string(rewards.size()) + " rewards were given");
  }
}

// Reasoning tokens get `reasoning`, tokens of candidate j get per_candidate(j).
TokenRewardVector broadcast(const ResponseLayout& layout, double reasoning, const Eigen::VectorXd& per_candidate) {
  TokenRewardVector out(layout.totalLength());
  for (int t = 0; t < layout.totalLength(); ++t) {
    const int j = layout.owner(t);
    out(t) = j < 0 ? reasoning : per_candidate(j);
  }
  return out;
}

}  // namespace

TokenRewardVector grpoTokenRewards(const ResponseLayout& layout, const Rewards& rewards) {
  checkCandidateCount(layout, rewards);
  return TokenRewardVector::Constant(layout.totalLength(), rewards.setReward());
}

TokenRewardVector shapeTokenRewards(const ResponseLayout& layout, const Rewards& rewards) {
  checkCandidateCount(layout, rewards);
  const double k = rewards.size();
  return broadcast(layout, std::max(rewards.setReward(), 0.0), scaledMaxShapley(rewards, k));
}

TokenRewardVector wtaTokenRewards(const ResponseLayout& layout, const Rewards& rewards) {
  checkCandidateCount(layout, rewards);
  const double best = rewards.setReward();
  const auto& r = rewards.values();
  const auto ties = (r.array() == best).count();
  const double share = rewards.size() * best / static_cast<double>(ties);
  const Eigen::VectorXd per_candidate = (r.array() == best).select(Eigen::VectorXd::Constant(r.size(), share), 0.0);
  return broadcast(layout, std::max(best, 0.0), per_candidate);
}

TokenRewardVector tokenRewards(Scheme scheme, const ResponseLayout& layout, const Rewards& rewards) {
  switch (scheme) {
    case Scheme::Grpo: return grpoTokenRewards(layout, rewards);
    case Scheme::Shape: return shapeTokenRewards(layout, rewards);
    case Scheme::Wta: return wtaTokenRewards(layout, rewards);
  }
  throw std::invalid_argument("unknown scheme");
}

std::string_view toString(PenaltyMode m) { return m == PenaltyMode::TokenLevel ? "token" : "sequence"; }

PenaltyMode penaltyModeFromString(std::string_view name) {
  if (name == "token") return PenaltyMode::TokenLevel;
  if (name == "sequence") return PenaltyMode::SequenceLevel;
  throw std::invalid_argument("unknown penalty mode '" + std::string(name) + "' (expected token or sequence)");
}

TokenRewardVector applyLengthPenalty(const TokenRewardVector& base, const ResponseLayout& layout,
                                     const PenaltyConfig& cfg, PenaltyMode mode) {
  if (base.size() != layout.totalLength()) {
    throw std::invalid_argument("applyLengthPenalty: reward vector does not match the layout");
  }
  if (!cfg.enabled) return base;
  if (cfg.target_len < 1) throw std::invalid_argument("applyLengthPenalty: target_len must be >= 1");

  const int overflow = std::max(layout.reasoningLength() - cfg.target_len, 0);
  const double penalty = static_cast<double>(overflow) / cfg.target_len;
  if (overflow == 0) return base;

  TokenRewardVector out = base;
  if (mode == PenaltyMode::SequenceLevel) {
    out.array() -= penalty;
    return out;
  }
  int reasoning_seen = 0;
  for (int t = 0; t < layout.totalLength(); ++t) {
    if (layout.owner(t) >= 0) continue;
    if (reasoning_seen++ >= cfg.target_len) out(t) -= penalty;
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text, const Markers& markers, Tokenizer tokenizer) {
  std::vector<std::string> tokens;
  if (tokenizer == Tokenizer::Whitespace) {
    std::size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
      const std::size_t start = i;
      while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
      if (i > start) tokens.emplace_back(text.substr(start, i - start));
    }
    return tokens;
  }
  // Character mode: markers are matched as whole substrings, everything else
  // is one token per byte.
  std::size_t i = 0;
  while (i < text.size()) {
    const std::string_view rest = text.substr(i);
    if (rest.starts_with(markers.open)) {
      tokens.push_back(markers.open);
      i += markers.open.size();
    } else if (rest.starts_with(markers.close)) {
      tokens.push_back(markers.close);
      i += markers.close.size();
    } else {
      tokens.emplace_back(1, text[i]);
      ++i;
    }
  }
  return tokens;
}

ParsedTranscript parseTranscript(std::string_view transcript, const Markers& markers, Tokenizer tokenizer) {
  if (markers.open.empty() || markers.close.empty()) throw LayoutParseError("markers must be non-empty");
  if (markers.open == markers.close) throw LayoutParseError("open and close markers must differ");

  std::vector<std::string> tokens;
  std::vector<Span> spans;
  bool inside = false;
  int span_start = 0;
  for (auto& tok : tokenize(transcript, markers, tokenizer)) {
    if (tok == markers.open) {
      if (inside) throw LayoutParseError("nested candidate marker '" + markers.open + "'");
      inside = true;
      span_start = static_cast<int>(tokens.size());
    } else if (tok == markers.close) {
      if (!inside) throw LayoutParseError("unbalanced candidate marker '" + markers.close + "'");
      inside = false;
      const int len = static_cast<int>(tokens.size()) - span_start;
      if (len == 0) throw LayoutParseError("empty candidate span");
      spans.push_back({span_start, len});
    } else {
      tokens.push_back(std::move(tok));
    }
  }
  if (inside) throw LayoutParseError("unbalanced candidate marker '" + markers.open + "'");
  if (spans.empty()) throw LayoutParseError("transcript contains zero candidates");
  return {ResponseLayout(static_cast<int>(tokens.size()), std::move(spans)), std::move(tokens)};
}

std::string renderTranscript(const ParsedTranscript& parsed, const Markers& markers, Tokenizer tokenizer) {
  const std::string sep = tokenizer == Tokenizer::Whitespace ? " " : "";
  std::string out;
  auto emit = [&](const std::string& piece) {
    if (!out.empty()) out += sep;
    out += piece;
  };
  const auto& layout = parsed.layout;
  for (int t = 0; t < layout.totalLength(); ++t) {
    const int j = layout.owner(t);
    if (j >= 0 && layout.spans()[static_cast<std::size_t>(j)].begin == t) emit(markers.open);
    emit(parsed.tokens[static_cast<std::size_t>(t)]);
    if (j >= 0 && layout.spans()[static_cast<std::size_t>(j)].end() == t + 1) emit(markers.close);
  }
  return out;
}

}  // namespace shapegrpo
