#include "shapegrpo/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace shapegrpo {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Reads one JSON object, remembering the dotted path for error messages and
// rejecting keys nobody asked for.
class FieldReader {
 public:
  FieldReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key);
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(child(key), "wrong type");
    }
  }

  const json& at(const std::string& key) const { return obj_.at(key); }

  void finish() const {
    for (const auto& item : obj_.items()) {
      if (!seen_.count(item.key())) throw ConfigError(child(item.key()), "unknown field");
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string formatDouble(double v) {
  if (!std::isfinite(v)) throw std::runtime_error("refusing to emit a non-finite value");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

ExperimentConfig parseConfig(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("malformed JSON: ") + e.what());
  }

  ExperimentConfig cfg;
  FieldReader top(root, "");

  if (top.has("env")) {
    FieldReader r(top.at("env"), "env");
    r.read("n_items", cfg.env.n_items);
    std::string mode = cfg.env.binary ? "binary" : "graded";
    r.read("mode", mode);
    if (mode != "binary" && mode != "graded") throw ConfigError("env.mode", "expected binary or graded");
    cfg.env.binary = mode == "binary";
    r.read("correct", cfg.env.correct);
    r.read("utilities", cfg.env.utilities);
    r.read("noise_std", cfg.env.noise_std);
    r.read("r_max", cfg.env.r_max);
    r.finish();
  }
  if (top.has("policy")) {
    FieldReader r(top.at("policy"), "policy");
    r.read("k", cfg.policy.k);
    r.read("init_scale", cfg.policy.init_scale);
    r.read("init_logits", cfg.policy.init_logits);
    r.read("seed", cfg.policy.seed);
    r.finish();
  }
  if (top.has("training")) {
    FieldReader r(top.at("training"), "training");
    if (r.has("schemes")) {
      std::vector<std::string> names;
      r.read("schemes", names);
      cfg.training.schemes.clear();
      for (std::size_t i = 0; i < names.size(); ++i) {
        try {
          cfg.training.schemes.push_back(schemeFromString(names[i]));
        } catch (const std::invalid_argument& e) {
          throw ConfigError("training.schemes[" + std::to_string(i) + "]", e.what());
        }
      }
    }
    r.read("steps", cfg.training.steps);
    r.read("group_size", cfg.training.group_size);
    r.read("lr", cfg.training.lr);
    r.read("clip_eps", cfg.training.clip_eps);
    r.read("kl_coef", cfg.training.kl_coef);
    r.read("inner_epochs", cfg.training.inner_epochs);
    r.read("candidate_len", cfg.training.candidate_len);
    r.read("reasoning_len", cfg.training.reasoning_len);
    if (r.has("length_penalty")) {
      FieldReader p(r.at("length_penalty"), "training.length_penalty");
      p.read("enabled", cfg.training.penalty_enabled);
      p.read("target_len", cfg.training.penalty_target_len);
      if (p.has("mode")) {
        std::string mode;
        p.read("mode", mode);
        try {
          cfg.training.penalty_mode = penaltyModeFromString(mode);
        } catch (const std::invalid_argument& e) {
          throw ConfigError("training.length_penalty.mode", e.what());
        }
      }
      p.finish();
    }
    r.finish();
  }
  if (top.has("output")) {
    FieldReader r(top.at("output"), "output");
    r.read("dir", cfg.output.dir);
    r.read("eval_every", cfg.output.eval_every);
    r.read("workers", cfg.output.workers);
    r.read("record_wall_ms", cfg.output.record_wall_ms);
    r.read("first_k_rollouts", cfg.output.first_k_rollouts);
    r.read("final_window", cfg.output.final_window);
    r.finish();
  }
  top.read("seeds", cfg.seeds);
  top.finish();

  cfg.validate();
  return cfg;
}

ExperimentConfig loadConfig(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parseConfig(buf.str());
}

std::string serializeConfig(const ExperimentConfig& cfg) {
  json root;
  root["env"] = {{"n_items", cfg.env.n_items},
                 {"mode", cfg.env.binary ? "binary" : "graded"},
                 {"correct", cfg.env.correct},
                 {"utilities", cfg.env.utilities},
                 {"noise_std", cfg.env.noise_std},
                 {"r_max", cfg.env.r_max}};
  root["policy"] = {{"k", cfg.policy.k},
                    {"init_scale", cfg.policy.init_scale},
                    {"init_logits", cfg.policy.init_logits},
                    {"seed", cfg.policy.seed}};
  std::vector<std::string> schemes;
  for (Scheme s : cfg.training.schemes) schemes.emplace_back(toString(s));
  root["training"] = {{"schemes", schemes},
                      {"steps", cfg.training.steps},
                      {"group_size", cfg.training.group_size},
                      {"lr", cfg.training.lr},
                      {"clip_eps", cfg.training.clip_eps},
                      {"kl_coef", cfg.training.kl_coef},
                      {"inner_epochs", cfg.training.inner_epochs},
                      {"candidate_len", cfg.training.candidate_len},
                      {"reasoning_len", cfg.training.reasoning_len},
                      {"length_penalty",
                       {{"enabled", cfg.training.penalty_enabled},
                        {"target_len", cfg.training.penalty_target_len},
                        {"mode", std::string(toString(cfg.training.penalty_mode))}}}};
  root["output"] = {{"dir", cfg.output.dir},
                    {"eval_every", cfg.output.eval_every},
                    {"workers", cfg.output.workers},
                    {"record_wall_ms", cfg.output.record_wall_ms},
                    {"first_k_rollouts", cfg.output.first_k_rollouts},
                    {"final_window", cfg.output.final_window}};
  root["seeds"] = cfg.seeds;
  return root.dump(2) + "\n";
}

void ExperimentConfig::validate() const {
  if (env.n_items < 1) throw ConfigError("env.n_items", "must be >= 1");
  if (env.binary) {
    if (env.correct.empty()) throw ConfigError("env.correct", "binary mode needs at least one correct item");
    if (!env.utilities.empty()) throw ConfigError("env.utilities", "not allowed in binary mode");
    if (env.noise_std != 0.0) throw ConfigError("env.noise_std", "binary mode is noise-free");
    std::set<int> unique;
    for (std::size_t i = 0; i < env.correct.size(); ++i) {
      const int item = env.correct[i];
      if (item < 0 || item >= env.n_items || !unique.insert(item).second) {
        throw ConfigError("env.correct[" + std::to_string(i) + "]", "invalid or duplicate item index");
      }
    }
  } else {
    if (!env.correct.empty()) throw ConfigError("env.correct", "only allowed in binary mode");
    if (static_cast<int>(env.utilities.size()) != env.n_items) {
      throw ConfigError("env.utilities", "length must equal env.n_items");
    }
    if (!(env.r_max > 0.0)) throw ConfigError("env.r_max", "must be positive");
    for (std::size_t i = 0; i < env.utilities.size(); ++i) {
      const double u = env.utilities[i];
      if (!(u >= 0.0 && u <= env.r_max)) throw ConfigError("env.utilities[" + std::to_string(i) + "]", "outside [0, r_max]");
    }
    if (!(env.noise_std >= 0.0) || !std::isfinite(env.noise_std)) throw ConfigError("env.noise_std", "must be >= 0");
  }

  if (policy.k < 1 || policy.k > env.n_items) throw ConfigError("policy.k", "must lie in [1, env.n_items]");
  if (!(policy.init_scale >= 0.0) || !std::isfinite(policy.init_scale)) {
    throw ConfigError("policy.init_scale", "must be >= 0");
  }
  if (!policy.init_logits.empty() && static_cast<int>(policy.init_logits.size()) != env.n_items) {
    throw ConfigError("policy.init_logits", "length must equal env.n_items");
  }
  for (double v : policy.init_logits) {
    if (!std::isfinite(v)) throw ConfigError("policy.init_logits", "must be finite");
  }

  if (training.schemes.empty()) throw ConfigError("training.schemes", "at least one scheme is required");
  if (std::set<Scheme>(training.schemes.begin(), training.schemes.end()).size() != training.schemes.size()) {
    throw ConfigError("training.schemes", "duplicate scheme");
  }
  if (training.steps < 1) throw ConfigError("training.steps", "must be >= 1");
  if (training.group_size < 1) throw ConfigError("training.group_size", "must be >= 1");
  if (!(training.lr > 0.0) || !std::isfinite(training.lr)) throw ConfigError("training.lr", "must be > 0");
  if (!(training.clip_eps > 0.0 && training.clip_eps < 1.0)) throw ConfigError("training.clip_eps", "must lie in (0, 1)");
  if (!(training.kl_coef >= 0.0) || !std::isfinite(training.kl_coef)) throw ConfigError("training.kl_coef", "must be >= 0");
  if (training.inner_epochs < 1) throw ConfigError("training.inner_epochs", "must be >= 1");
  if (training.candidate_len < 1) throw ConfigError("training.candidate_len", "must be >= 1");
  if (training.reasoning_len < 0) throw ConfigError("training.reasoning_len", "must be >= 0");
  if (training.penalty_target_len < 1) throw ConfigError("training.length_penalty.target_len", "must be >= 1");

  if (output.eval_every < 1) throw ConfigError("output.eval_every", "must be >= 1");
  if (output.workers < 1) throw ConfigError("output.workers", "must be >= 1");
  if (output.first_k_rollouts < 0) throw ConfigError("output.first_k_rollouts", "must be >= 0");
  if (!(output.final_window > 0.0 && output.final_window <= 1.0)) {
    throw ConfigError("output.final_window", "must lie in (0, 1]");
  }

  if (seeds.empty()) throw ConfigError("seeds", "at least one seed is required");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("seeds", "duplicate seed");
  }
}

Environment ExperimentConfig::makeEnvironment() const {
  if (env.binary) return Environment::binary(env.n_items, env.correct);
  return Environment(Eigen::Map<const Eigen::VectorXd>(env.utilities.data(), env.n_items), env.noise_std, env.r_max);
}

PolicyState ExperimentConfig::makePolicy(std::uint64_t run_seed) const {
  Eigen::VectorXd logits = Eigen::VectorXd::Zero(env.n_items);
  if (!policy.init_logits.empty()) {
    logits = Eigen::Map<const Eigen::VectorXd>(policy.init_logits.data(), env.n_items);
  } else if (policy.init_scale > 0.0) {
    std::mt19937_64 rng(mixSeed(policy.seed, run_seed));
    std::normal_distribution<double> normal(0.0, policy.init_scale);
    for (auto& v : logits) v = normal(rng);
  }
  return PolicyState(std::move(logits), policy.k);
}

Hyper ExperimentConfig::hyper() const {
  Hyper h;
  h.lr = training.lr;
  h.clip_eps = training.clip_eps;
  h.kl_coef = training.kl_coef;
  h.group_size = training.group_size;
  h.inner_epochs = training.inner_epochs;
  h.layout = {training.candidate_len, training.reasoning_len};
  h.penalty = {training.penalty_target_len, training.penalty_enabled};
  h.penalty_mode = training.penalty_mode;
  return h;
}

fs::path ExperimentConfig::outputDir() const {
  if (!output.dir.empty()) return output.dir;
  if (const char* env_dir = std::getenv(kOutDirEnv); env_dir && *env_dir) return env_dir;
  return "runs";
}

// ---------------------------------------------------------------------------
// Traces

std::string formatTraceCsv(const TrainingTrace& rows) {
  std::string out = std::string(kTraceHeader) + "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.step) + "," + std::string(toString(r.scheme)) + "," + std::to_string(r.seed) + "," +
           formatDouble(r.mean_set_reward) + "," + formatDouble(r.greedy_set_reward) + "," +
           formatDouble(r.kl_to_reference) + "," + formatDouble(r.wall_ms) + "\n";
  }
  return out;
}

TrainingTrace parseTraceCsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader) throw std::runtime_error("trace: missing or unexpected header");
  TrainingTrace rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw std::runtime_error("trace line " + std::to_string(line_no) + ": expected 7 columns");
    try {
      TraceRow r;
      r.step = std::stoll(cells[0]);
      r.scheme = schemeFromString(cells[1]);
      r.seed = std::stoull(cells[2]);
      r.mean_set_reward = std::stod(cells[3]);
      r.greedy_set_reward = std::stod(cells[4]);
      r.kl_to_reference = std::stod(cells[5]);
      r.wall_ms = std::stod(cells[6]);
      if (!rows.empty() && r.step <= rows.back().step) throw std::runtime_error("steps must increase");
      rows.push_back(r);
    } catch (const std::exception& e) {
      throw std::runtime_error("trace line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

std::string traceFileName(Scheme scheme, std::uint64_t seed) {
  return "trace_" + std::string(toString(scheme)) + "_seed" + std::to_string(seed) + ".csv";
}

std::string firstKFileName(Scheme scheme, std::uint64_t seed) {
  return "firstk_" + std::string(toString(scheme)) + "_seed" + std::to_string(seed) + ".csv";
}

TrainingTrace evaluationRows(const TrainingTrace& full, int eval_every, int steps) {
  TrainingTrace out;
  for (const auto& r : full) {
    if (r.step % eval_every == 0 || r.step == steps) out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Runs

RunSummary summarizeRun(const TrainingTrace& rows, double optimal, int steps, double final_window) {
  if (rows.empty()) throw std::runtime_error("summarizeRun: empty trace");
  RunSummary s;
  s.scheme = rows.front().scheme;
  s.seed = rows.front().seed;
  for (const auto& r : rows) {
    if (r.greedy_set_reward >= 0.95 * optimal) {
      s.steps_to_95 = r.step;
      break;
    }
  }
  const double cutoff = steps * (1.0 - final_window);
  double sum = 0.0;
  int count = 0;
  for (const auto& r : rows) {
    if (r.step > cutoff) {
      sum += r.mean_set_reward;
      ++count;
    }
  }
  s.final_mean_set_reward = count > 0 ? sum / count : rows.back().mean_set_reward;
  s.final_greedy_set_reward = rows.back().greedy_set_reward;
  return s;
}

const SchemeSummary& ExperimentSummary::scheme(Scheme s) const {
  for (const auto& sc : schemes) {
    if (sc.scheme == s) return sc;
  }
  throw std::out_of_range("scheme not present in the summary");
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void writeFileAtomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string readFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

ExperimentSummary runExperiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path dir = cfg.outputDir();
  fs::create_directories(dir);

  const Environment env = cfg.makeEnvironment();
  const Hyper hyper = cfg.hyper();
  const int steps = cfg.training.steps;

  struct Job {
    Scheme scheme;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (Scheme s : cfg.training.schemes) {
    for (std::uint64_t seed : cfg.seeds) jobs.push_back({s, seed});
  }

  std::atomic<std::size_t> next{0};
  std::atomic<int> skipped{0};
  std::mutex error_mutex;
  std::exception_ptr error;

  auto worker = [&] {
    for (std::size_t idx = next++; idx < jobs.size(); idx = next++) {
      try {
        const Job& job = jobs[idx];
        const fs::path trace_path = dir / traceFileName(job.scheme, job.seed);
        if (fs::exists(trace_path)) {
          ++skipped;
          continue;
        }
        PolicyState policy = cfg.makePolicy(job.seed);
        const TrainingTrace full = train(policy, env, job.scheme, steps, hyper, job.seed, cfg.output.record_wall_ms);
        if (cfg.output.first_k_rollouts > 0) {
          const Rollout eval = sampleRollout(policy, env, cfg.output.first_k_rollouts, mixSeed(job.seed, ~0ULL),
                                             hyper.layout);
          const Eigen::VectorXd curve = firstKRewardCurve(env, eval, policy.k);
          std::string csv = "k,mean_set_reward\n";
          for (Eigen::Index k = 0; k < curve.size(); ++k) csv += std::to_string(k + 1) + "," + formatDouble(curve(k)) + "\n";
          writeFileAtomic(dir / firstKFileName(job.scheme, job.seed), csv);
        }
        // The trace is written last: its presence marks the job complete.
        writeFileAtomic(trace_path, formatTraceCsv(evaluationRows(full, cfg.output.eval_every, steps)));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };

  const int n_workers = std::min<int>(cfg.output.workers, static_cast<int>(jobs.size()));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);

  ExperimentSummary summary;
  summary.optimal_set_reward = env.optimalSetReward();
  summary.skipped = skipped;
  for (const Job& job : jobs) {
    const TrainingTrace rows = parseTraceCsv(readFile(dir / traceFileName(job.scheme, job.seed)));
    summary.runs.push_back(summarizeRun(rows, summary.optimal_set_reward, steps, cfg.output.final_window));
  }
  for (Scheme s : cfg.training.schemes) {
    SchemeSummary sc;
    sc.scheme = s;
    std::vector<double> reach;
    std::vector<double> finals;
    for (const auto& run : summary.runs) {
      if (run.scheme != s) continue;
      ++sc.runs;
      if (run.steps_to_95) ++sc.reached;
      reach.push_back(run.steps_to_95 ? static_cast<double>(*run.steps_to_95) : steps + 1.0);
      finals.push_back(run.final_mean_set_reward);
    }
    sc.median_steps_to_95 = median(reach);
    sc.final_reward_min = *std::min_element(finals.begin(), finals.end());
    sc.final_reward_max = *std::max_element(finals.begin(), finals.end());
    summary.schemes.push_back(sc);
  }
  writeFileAtomic(dir / "summary.json", formatSummaryJson(summary));
  return summary;
}

std::string formatSummaryJson(const ExperimentSummary& summary) {
  json root;
  root["optimal_set_reward"] = summary.optimal_set_reward;
  json runs = json::array();
  for (const auto& r : summary.runs) {
    runs.push_back({{"scheme", std::string(toString(r.scheme))},
                    {"seed", r.seed},
                    {"steps_to_95", r.steps_to_95 ? json(*r.steps_to_95) : json(nullptr)},
                    {"final_mean_set_reward", r.final_mean_set_reward},
                    {"final_greedy_set_reward", r.final_greedy_set_reward}});
  }
  root["runs"] = runs;
  json schemes = json::array();
  for (const auto& s : summary.schemes) {
    schemes.push_back({{"scheme", std::string(toString(s.scheme))},
                       {"median_steps_to_95", s.median_steps_to_95},
                       {"reached", s.reached},
                       {"runs", s.runs},
                       {"final_reward_min", s.final_reward_min},
                       {"final_reward_max", s.final_reward_max},
                       {"final_reward_range", s.final_reward_range()}});
  }
  root["schemes"] = schemes;
  return root.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Plot data

Eigen::VectorXd movingAverage(const Eigen::VectorXd& x, int window) {
  if (window < 1) throw std::invalid_argument("movingAverage: window must be >= 1");
  Eigen::VectorXd out(x.size());
  for (Eigen::Index t = 0; t < x.size(); ++t) {
    const Eigen::Index first = std::max<Eigen::Index>(0, t - window + 1);
    out(t) = x.segment(first, t - first + 1).mean();
  }
  return out;
}

namespace {

struct Band {
  Eigen::VectorXd mean, lo, hi;
};

Band aggregate(const std::vector<Eigen::VectorXd>& series) {
  const auto n = series.front().size();
  Band b{Eigen::VectorXd::Zero(n), series.front(), series.front()};
  for (const auto& s : series) {
    b.mean += s;
    b.lo = b.lo.cwiseMin(s);
    b.hi = b.hi.cwiseMax(s);
  }
  b.mean /= static_cast<double>(series.size());
  return b;
}

bool startsWith(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

std::string emitPlotData(const fs::path& trace_dir, int window) {
  if (window < 1) throw std::invalid_argument("plot: window must be >= 1");
  if (!fs::is_directory(trace_dir)) throw std::runtime_error("plot: not a directory: " + trace_dir.string());

  std::vector<fs::path> trace_files, firstk_files;
  for (const auto& entry : fs::directory_iterator(trace_dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.path().extension() != ".csv") continue;
    if (startsWith(name, "trace_")) trace_files.push_back(entry.path());
    if (startsWith(name, "firstk_")) firstk_files.push_back(entry.path());
  }
  if (trace_files.empty()) throw std::runtime_error("plot: no trace files in " + trace_dir.string());
  std::sort(trace_files.begin(), trace_files.end());
  std::sort(firstk_files.begin(), firstk_files.end());

  std::map<Scheme, std::vector<TrainingTrace>> by_scheme;
  for (const auto& f : trace_files) {
    TrainingTrace rows = parseTraceCsv(readFile(f));
    if (rows.empty()) continue;
    by_scheme[rows.front().scheme].push_back(std::move(rows));
  }
  if (by_scheme.empty()) throw std::runtime_error("plot: all trace files are empty");

  std::string out = std::string(kPlotHeader) + "\n";
  const std::pair<const char*, double TraceRow::*> metrics[] = {
      {"mean_set_reward", &TraceRow::mean_set_reward},
      {"greedy_set_reward", &TraceRow::greedy_set_reward},
      {"kl_to_reference", &TraceRow::kl_to_reference}};

  for (const auto& [scheme, traces] : by_scheme) {
    const auto& steps = traces.front();
    for (const auto& t : traces) {
      if (t.size() != steps.size() ||
          !std::equal(t.begin(), t.end(), steps.begin(), [](const TraceRow& a, const TraceRow& b) { return a.step == b.step; })) {
        throw std::runtime_error("plot: traces of scheme " + std::string(toString(scheme)) + " have different steps");
      }
    }
    for (const auto& [name, field] : metrics) {
      std::vector<Eigen::VectorXd> series;
      for (const auto& t : traces) {
        Eigen::VectorXd v(static_cast<Eigen::Index>(t.size()));
        for (std::size_t i = 0; i < t.size(); ++i) v(static_cast<Eigen::Index>(i)) = t[i].*field;
        series.push_back(movingAverage(v, window));
      }
      const Band b = aggregate(series);
      for (std::size_t i = 0; i < steps.size(); ++i) {
        const auto e = static_cast<Eigen::Index>(i);
        out += "trace," + std::string(toString(scheme)) + "," + name + "," + std::to_string(steps[i].step) + "," +
               formatDouble(b.mean(e)) + "," + formatDouble(b.lo(e)) + "," + formatDouble(b.hi(e)) + "\n";
      }
    }
  }

  std::map<std::string, std::vector<Eigen::VectorXd>> firstk;
  for (const auto& f : firstk_files) {
    // firstk_<scheme>_seed<n>.csv
    const std::string name = f.filename().string();
    const std::string scheme = name.substr(7, name.find("_seed") - 7);
    std::istringstream in(readFile(f));
    std::string line;
    std::getline(in, line);
    std::vector<double> values;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      values.push_back(std::stod(line.substr(line.find(',') + 1)));
    }
    firstk[scheme].push_back(Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
  }
  for (const auto& [scheme, curves] : firstk) {
    const Band b = aggregate(curves);
    for (Eigen::Index k = 0; k < b.mean.size(); ++k) {
      out += "firstk," + scheme + ",mean_set_reward," + std::to_string(k + 1) + "," + formatDouble(b.mean(k)) + "," +
             formatDouble(b.lo(k)) + "," + formatDouble(b.hi(k)) + "\n";
    }
  }
  return out;
}

}  // namespace shapegrpo
