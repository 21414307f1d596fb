// shapegrpo: run bandit experiments, audit the Shapley machinery, emit plot
// data, and inspect token-level allocations of a transcript.
//
// Exit status: 0 success, 1 failed audit, 2 usage or config error,
// 3 runtime error (I/O, malformed traces).

#include "shapegrpo/audit.hpp"
#include "shapegrpo/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

namespace {

constexpr int kExitAuditFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::vector<double> parseRewardList(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument("bad reward '" + cell + "'");
    out.push_back(v);
  }
  return out;
}

int runCommand(const std::string& config_path) {
  using namespace shapegrpo;
  const ExperimentConfig cfg = loadConfig(config_path);
  const ExperimentSummary summary = runExperiment(cfg);
  std::printf("output: %s (%d job(s) reused)\n", cfg.outputDir().string().c_str(), summary.skipped);
  for (const auto& s : summary.schemes) {
    std::printf("%-6s median_steps_to_95=%g reached=%d/%d final_reward=[%.4f, %.4f]\n",
                std::string(toString(s.scheme)).c_str(), s.median_steps_to_95, s.reached, s.runs, s.final_reward_min,
                s.final_reward_max);
  }
  return 0;
}

int auditCommand(const shapegrpo::AuditOptions& opts) {
  const auto report = shapegrpo::runAudit(opts);
  std::cout << report.format();
  return report.passed() ? 0 : kExitAuditFailed;
}

int plotCommand(const std::string& dir, int window, const std::string& out_path) {
  const std::string csv = shapegrpo::emitPlotData(dir, window);
  const std::filesystem::path out = out_path.empty() ? std::filesystem::path(dir) / "plot_data.csv" : std::filesystem::path(out_path);
  shapegrpo::writeFileAtomic(out, csv);
  std::printf("wrote %s\n", out.string().c_str());
  return 0;
}

int allocCommand(const std::string& path, const std::string& rewards_text, const std::string& scheme_name,
                 const shapegrpo::Markers& markers, const std::string& tokenizer_name) {
  using namespace shapegrpo;
  const Tokenizer tokenizer = tokenizer_name == "character" ? Tokenizer::Character : Tokenizer::Whitespace;
  const ParsedTranscript parsed = parseTranscript(readFile(path), markers, tokenizer);
  const Rewards rewards = Rewards::fromStd(parseRewardList(rewards_text));
  const TokenRewardVector tok = tokenRewards(schemeFromString(scheme_name), parsed.layout, rewards);
  std::printf("# K=%d |w|=%d |o|=%d R(o)=%g\n", parsed.layout.candidates(), parsed.layout.reasoningLength(),
              parsed.layout.totalLength(), rewards.setReward());
  for (int t = 0; t < parsed.layout.totalLength(); ++t) {
    const int j = parsed.layout.owner(t);
    const std::string region = j < 0 ? "w" : "c" + std::to_string(j + 1);
    std::printf("%d\t%s\t%s\t%.12g\n", t, region.c_str(), parsed.tokens[static_cast<std::size_t>(t)].c_str(), tok(t));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shapley-enhanced credit assignment for multi-candidate responses"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run every (scheme, seed) job of an experiment config");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();

  shapegrpo::AuditOptions audit_opts;
  auto* audit = app.add_subcommand("audit", "Randomized check of the Shapley and allocation invariants");
  audit->add_option("--max-k", audit_opts.max_k, "Largest candidate count (<= 12)");
  audit->add_option("--trials", audit_opts.trials, "Random cases per check");
  audit->add_option("--seed", audit_opts.seed, "RNG seed");
  audit->add_flag("--inject-fault", audit_opts.inject_fault, "Perturb one Shapley value; the audit must fail");

  std::string trace_dir, plot_out;
  int window = 1;
  auto* plot = app.add_subcommand("plot", "Aggregate traces into plot data");
  plot->add_option("trace-dir", trace_dir, "Directory holding trace_*.csv")->required();
  plot->add_option("--window", window, "Moving-average window");
  plot->add_option("--out", plot_out, "Output file (default <trace-dir>/plot_data.csv)");

  std::string transcript_path, rewards_text, scheme_name = "shape", tokenizer_name = "whitespace";
  shapegrpo::Markers markers;
  auto* alloc = app.add_subcommand("alloc", "Print per-token rewards for a marked-up transcript");
  alloc->add_option("transcript", transcript_path, "Transcript file")->required();
  alloc->add_option("--rewards", rewards_text, "Comma-separated candidate rewards")->required();
  alloc->add_option("--scheme", scheme_name, "grpo, shape or wta")->check(CLI::IsMember({"grpo", "shape", "wta"}));
  alloc->add_option("--open", markers.open, "Candidate open marker");
  alloc->add_option("--close", markers.close, "Candidate close marker");
  alloc->add_option("--tokenizer", tokenizer_name, "whitespace or character")
      ->check(CLI::IsMember({"whitespace", "character"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return runCommand(config_path);
    if (*audit) return auditCommand(audit_opts);
    if (*plot) return plotCommand(trace_dir, window, plot_out);
    if (*alloc) return allocCommand(transcript_path, rewards_text, scheme_name, markers, tokenizer_name);
  } catch (const shapegrpo::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const shapegrpo::LayoutParseError& e) {
    std::cerr << "transcript error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
