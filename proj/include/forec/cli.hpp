#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "forec/eval.hpp"
#include "forec/synthgen.hpp"
#include "forec/train.hpp"

namespace forec::cli {

// Fully resolved experiment description. Parsed from a JSON config file;
// every field has a default, and the resolved values are materialized into
// the run manifest so a run is never implicit.
struct ExperimentConfig {
  std::string prepared_dir;                       // either this...
  std::optional<synth::SynthConfig> synth;        // ...or generated data
  std::string method = "nmf";
  std::string target;
  std::string source;
  model::ModelConfig model;
  train::TrainConfig train;
  train::MamlConfig maml;
  train::ForecConfig forec;
  long eval_k = 10;
  long eval_negatives = 99;
  std::uint64_t seed = 1;
  std::string out_dir = "run";
};

ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);
std::string experiment_config_json(const ExperimentConfig& config);

bool is_cross_market(const std::string& method);
const std::vector<std::string>& known_methods();

struct PrepareOptions {
  std::vector<std::pair<std::string, std::string>> markets;  // (code, path)
  std::string out_dir;
  long min_count = 5;
};

struct PrepareSummary {
  std::string dir;
  std::string manifest_path;
  std::map<std::string, long> users_before, users_after;
  std::map<std::string, long> items_before, items_after;
  std::map<std::string, long> interactions_after;
};

PrepareSummary cmd_prepare(const PrepareOptions& options);

struct SynthOptions {
  synth::SynthConfig config;
  std::string out_dir;
  bool prepare = true;  // also run the prepare step on the emitted files
};

struct SynthSummary {
  std::string source_path, target_path;
  std::string prepared_dir;  // empty when prepare = false
  std::string manifest_path;
};

SynthSummary cmd_synth(const SynthOptions& options);

struct TrainOutcome {
  std::string final_checkpoint;                               // prefix
  std::vector<std::pair<std::string, std::string>> stages;    // (name, prefix)
  std::string loss_history_path;
  std::string manifest_path;
  std::vector<std::string> warnings;
};

TrainOutcome cmd_train(const ExperimentConfig& config, bool resume = false);

struct EvalOptions {
  std::string checkpoint;  // prefix
  std::string prepared_dir;
  std::string target;
  std::string out_dir;
  long k = 10;
  long negatives = 99;
  std::uint64_t seed = 1;
  long groups = 0;                      // emit per-group report when > 0
  std::string compare_per_user;         // paired t-test against another run
};

struct EvalOutcome {
  eval::MetricReport test;
  eval::MetricReport valid;
  std::string metrics_path;
  std::string per_user_path;
  std::string report_path;
  std::string manifest_path;
  std::optional<eval::TTestResult> significance;
};

EvalOutcome cmd_eval(const EvalOptions& options);

struct SweepOptions {
  ExperimentConfig base;
  std::vector<std::string> methods;
  std::vector<std::string> sources;
  std::string fixed_source;
  long workers = 1;
};

struct SweepCell {
  std::string method, source;
  bool ok = false;
  std::string error;
  double valid_ndcg = 0.0;
  double test_ndcg = 0.0, test_hr = 0.0;
};

struct SweepRow {
  std::string method;
  double best_src_ndcg = 0.0, best_src_hr = 0.0;
  std::string best_source;
  double ave_src_ndcg = 0.0, ave_src_hr = 0.0;
  double fix_src_ndcg = 0.0, fix_src_hr = 0.0;
  bool has_fix = false;
  // winner markers per scenario column (the bold-face analog)
  bool wins_best = false, wins_ave = false, wins_fix = false;
};

struct SweepOutcome {
  std::vector<SweepCell> cells;
  std::vector<SweepRow> rows;
  std::string table_path;
  std::string manifest_path;
};

SweepOutcome cmd_sweep(const SweepOptions& options);

struct AnalyzeOptions {
  std::vector<std::pair<std::string, std::string>> markets;  // (code, path)
  std::string out_dir;
  bool apply_kcore = false;
  long min_count = 5;
};

struct AnalyzeOutcome {
  std::vector<std::vector<double>> similarity;
  std::vector<std::string> codes;
  std::string similarity_path;
  std::string ratings_path;
  std::string manifest_path;
};

AnalyzeOutcome cmd_analyze(const AnalyzeOptions& options);

}  // namespace forec::cli
