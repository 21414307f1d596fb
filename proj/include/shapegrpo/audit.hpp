#pragma once

// Randomized self-check of the Shapley and allocation invariants.

#include <cstdint>
#include <string>
#include <vector>

namespace shapegrpo {

struct AuditOptions {
  int max_k = 8;
  int trials = 500;
  std::uint64_t seed = 0;
  /// Perturbs one closed-form Shapley value so the auditor must fail.
  bool inject_fault = false;
};

struct CheckResult {
  std::string name;
  int cases = 0;
  double max_residual = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_residual <= tolerance; }
};

struct AuditReport {
  std::vector<CheckResult> checks;
  bool passed() const;
  std::string format() const;
};

/// Throws std::invalid_argument when max_k is outside [1, 12] or trials < 1.
AuditReport runAudit(const AuditOptions& options);

}  // namespace shapegrpo
