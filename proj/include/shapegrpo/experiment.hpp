#pragma once

// Config-driven experiment orchestration and CSV emission.

#include "shapegrpo/bandit.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace shapegrpo {

/// Invalid configuration; the message starts with the offending field path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct EnvSpec {
  int n_items = 50;
  bool binary = true;
  std::vector<int> correct;          // binary mode
  std::vector<double> utilities;     // graded mode
  double noise_std = 0.0;
  double r_max = 1.0;
  bool operator==(const EnvSpec&) const = default;
};

struct PolicySpec {
  int k = 4;
  double init_scale = 0.0;           // std of Gaussian initial logits
  std::vector<double> init_logits;   // overrides init_scale when present
  std::uint64_t seed = 0;
  bool operator==(const PolicySpec&) const = default;
};

struct TrainingSpec {
  std::vector<Scheme> schemes{Scheme::Grpo, Scheme::Shape};
  int steps = 1000;
  int group_size = 4;
  double lr = 0.1;
  double clip_eps = 0.2;
  double kl_coef = 0.01;
  int inner_epochs = 1;
  int candidate_len = 1;
  int reasoning_len = 0;
  bool penalty_enabled = false;
  int penalty_target_len = 2048;
  PenaltyMode penalty_mode = PenaltyMode::TokenLevel;
  bool operator==(const TrainingSpec&) const = default;
};

struct OutputSpec {
  std::string dir;                   // empty: $SHAPEGRPO_OUT_DIR, then "runs"
  int eval_every = 20;
  int workers = 1;
  bool record_wall_ms = false;
  int first_k_rollouts = 1000;       // 0 disables the first-k curve files
  double final_window = 0.1;         // fraction of steps averaged for the final reward
  bool operator==(const OutputSpec&) const = default;
};

struct ExperimentConfig {
  EnvSpec env;
  PolicySpec policy;
  TrainingSpec training;
  OutputSpec output;
  std::vector<std::uint64_t> seeds{0};
  bool operator==(const ExperimentConfig&) const = default;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;

  Environment makeEnvironment() const;
  PolicyState makePolicy(std::uint64_t run_seed) const;
  Hyper hyper() const;
  std::filesystem::path outputDir() const;
};

/// Environment variable consulted when output.dir is empty.
inline constexpr const char* kOutDirEnv = "SHAPEGRPO_OUT_DIR";

ExperimentConfig parseConfig(const std::string& json_text);
ExperimentConfig loadConfig(const std::filesystem::path& path);
std::string serializeConfig(const ExperimentConfig& cfg);

inline constexpr const char* kTraceHeader =
    "step,scheme,seed,mean_set_reward,greedy_set_reward,kl_to_reference,wall_ms";

std::string formatTraceCsv(const TrainingTrace& rows);
TrainingTrace parseTraceCsv(const std::string& text);

std::string traceFileName(Scheme scheme, std::uint64_t seed);
std::string firstKFileName(Scheme scheme, std::uint64_t seed);

/// Rows kept in the trace file: every eval_every-th step plus the last.
TrainingTrace evaluationRows(const TrainingTrace& full, int eval_every, int steps);

struct RunSummary {
  Scheme scheme = Scheme::Grpo;
  std::uint64_t seed = 0;
  /// First recorded step with greedy reward >= 95% of optimal; nullopt if never.
  std::optional<std::int64_t> steps_to_95;
  double final_mean_set_reward = 0.0;
  double final_greedy_set_reward = 0.0;
};

struct SchemeSummary {
  Scheme scheme = Scheme::Grpo;
  /// Median with unreached runs counted as steps + 1.
  double median_steps_to_95 = 0.0;
  int reached = 0;
  int runs = 0;
  double final_reward_min = 0.0;
  double final_reward_max = 0.0;
  double final_reward_range() const { return final_reward_max - final_reward_min; }
};

struct ExperimentSummary {
  double optimal_set_reward = 0.0;
  std::vector<RunSummary> runs;
  std::vector<SchemeSummary> schemes;
  int skipped = 0;  // (scheme, seed) jobs already present on disk

  const SchemeSummary& scheme(Scheme s) const;
};

RunSummary summarizeRun(const TrainingTrace& rows, double optimal, int steps, double final_window);

/// Runs every (scheme, seed) job, writing trace_*.csv, firstk_*.csv and
/// summary.json into the output directory. Jobs whose trace already exists
/// are not rerun.
ExperimentSummary runExperiment(const ExperimentConfig& cfg);

std::string formatSummaryJson(const ExperimentSummary& summary);

/// Trailing moving average; the first w-1 entries average what is available.
Eigen::VectorXd movingAverage(const Eigen::VectorXd& x, int window);

inline constexpr const char* kPlotHeader = "kind,scheme,metric,x,mean,lo,hi";

/// Per-scheme mean and inter-seed [min, max] band after smoothing each seed;
/// first-k curves are aggregated alongside when present.
std::string emitPlotData(const std::filesystem::path& trace_dir, int window);

/// Writes via a temporary file and rename.
void writeFileAtomic(const std::filesystem::path& path, const std::string& content);
std::string readFile(const std::filesystem::path& path);

}  // namespace shapegrpo
