#pragma once

// Experiment orchestration: configuration files, prior training, embedding
// comparison, paired single-life sweeps and report aggregation.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "slrl/envsuite.hpp"
#include "slrl/mtsac.hpp"
#include "slrl/qwale.hpp"
#include "slrl/taskembed.hpp"

namespace slrl::harness {

struct ExperimentConfig {
  std::string profile = "desk";
  std::string run_name = "run";
  std::uint64_t seed = 0;
  embed::EmbeddingKind embedding = embed::EmbeddingKind::Sine;
  sac::SacConfig sac;
  qwale::QwaleConfig qwale;
  env::EnvConfig env;
  std::vector<env::TaskId> tasks{env::kAllTasks.begin(), env::kAllTasks.end()};
  int trials = 10;
  int eval_episodes = 10;
  int workers = 1;
  std::filesystem::path output_dir = "out";

  void validate() const;
};

/// Defaults for "desk" (width 256, 300 episodes per task), "ci" (width 64) or "full" (10000 episodes per task).
ExperimentConfig profile_defaults(const std::string& profile);

using KeyValues = std::map<std::string, std::string>;

/// Parses `key = value` lines. `[section]` headers prefix later keys with "section.";
/// `#` starts a comment; values may be double-quoted. Throws ConfigError with the line number.
KeyValues parse_key_values(std::istream& in);
KeyValues parse_key_values_file(const std::filesystem::path& path);

/// Applies recognised keys; unknown keys or malformed values throw ConfigError.
void apply_key_values(ExperimentConfig& config, const KeyValues& values);

/// Complete, re-loadable key/value rendering of every field.
std::string to_snapshot(const ExperimentConfig& config);
/// profile_defaults(profile in text) with the snapshot applied on top.
ExperimentConfig from_snapshot_text(const std::string& text);

/// Deterministic per-trial seed from the run seed, task and trial index.
std::uint64_t trial_seed(std::uint64_t run_seed, env::TaskId task, int trial);

inline constexpr const char* kConditionFrozen = "MT-SAC";
inline constexpr const char* kConditionQwale = "MT-QWALE";
inline constexpr const char* kConditionQwaleMasked = "MT-QWALE-masked";

struct TrialRecord {
  std::string condition;
  env::TaskId task = env::TaskId::WindowOpen;
  int trial = 0;
  std::uint64_t seed = 0;
  env::Vec3 novelty_offset{0.0, 0.0, 0.0};
  bool goal_masked = false;
  bool success = false;
  int steps = 0;
  int budget = 0;
  double wall_seconds = 0.0;
};

std::string trial_to_json(const TrialRecord& record);
/// Throws FormatError on missing or mistyped fields.
TrialRecord trial_from_json(const std::string& text);

struct ReportRow {
  std::string condition;
  env::TaskId task = env::TaskId::WindowOpen;
  int trials = 0;
  int successes = 0;
  double success_rate = 0.0;
  std::optional<double> mean_steps;  // over successful trials only
};

struct ReportTable {
  std::vector<ReportRow> rows;  // sorted by (condition, task)

  [[nodiscard]] std::vector<std::string> conditions() const;
  [[nodiscard]] const ReportRow* find(const std::string& condition, env::TaskId task) const;
  [[nodiscard]] std::string to_csv() const;
};

/// Order-independent aggregation: records are sorted by (condition, task, trial, seed) first.
ReportTable aggregate(std::vector<TrialRecord> records);

/// Evaluation-style rows (compare-embeddings) straight from success counts.
ReportRow make_row(std::string condition, env::TaskId task, int trials, int successes,
                   std::optional<double> mean_steps);

using Logger = std::function<void(const std::string&)>;

struct PriorRun {
  replay::PriorDataset prior;
  std::vector<sac::EpisodeLog> log;
};

/// Trains MT-SAC at novelty 0 on the configured tasks.
PriorRun train_prior(const ExperimentConfig& config, const Logger& log = {});

/// Writes config.snapshot, prior.bin, training_log.csv and prior_eval.csv under output_dir.
void cmd_train_prior(const ExperimentConfig& config, const Logger& log = {});

/// One prior per embedding kind; writes embeddings.csv (report format) and embeddings.svg.
ReportTable cmd_compare_embeddings(const ExperimentConfig& config, const Logger& log = {});

/// Paired QWALE and frozen-prior single lives for every (task, trial). Writes trials/*.json,
/// trajectories/*.csv, report.csv, success_rate.svg, mean_steps.svg and trajectories_<task>.svg.
ReportTable cmd_single_life(const ExperimentConfig& config, const std::filesystem::path& prior_path, bool masked,
                            const Logger& log = {});

struct ReportOutcome {
  ReportTable table;
  std::vector<std::filesystem::path> skipped;
};

/// Reads trials/*.json from each directory. Malformed directories are skipped with a warning;
/// throws std::runtime_error when none are usable.
ReportOutcome cmd_report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_dir,
                         const Logger& log = {});

/// Loads every trials/*.json in a run directory (sorted by name). Throws on any malformed file.
std::vector<TrialRecord> load_trials(const std::filesystem::path& run_dir);

/// Writes one success-rate and one mean-steps chart per condition in the table.
std::vector<std::filesystem::path> write_report_charts(const ReportTable& table, const std::filesystem::path& out_dir);

}  // namespace slrl::harness
