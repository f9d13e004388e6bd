#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "forec/cli.hpp"
#include "forec/version.hpp"

namespace {

using forec::cli::ExperimentConfig;

std::vector<std::pair<std::string, std::string>> parse_market_args(
    const std::vector<std::string>& args) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const std::string& a : args) {
    const size_t eq = a.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == a.size()) {
      throw CLI::ValidationError("markets", "expected code=path, got '" + a + "'");
    }
    out.emplace_back(a.substr(0, eq), a.substr(eq + 1));
  }
  return out;
}

void apply_overrides(ExperimentConfig& cfg, const std::string& method,
                     const std::string& source, const std::string& target,
                     const std::string& out, std::int64_t seed) {
  if (!method.empty()) cfg.method = method;
  if (!source.empty()) cfg.source = source;
  if (!target.empty()) cfg.target = target;
  if (!out.empty()) cfg.out_dir = out;
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forec: cross-market recommender toolkit"};
  app.set_version_flag("--version", forec::kVersion);
  app.require_subcommand(1);

  // prepare
  auto* prepare = app.add_subcommand("prepare", "filter, align and split ratings files");
  std::vector<std::string> prepare_markets;
  forec::cli::PrepareOptions prepare_opts;
  prepare->add_option("markets", prepare_markets, "market ratings as code=path")->required();
  prepare->add_option("--out", prepare_opts.out_dir, "output directory")->required();
  prepare->add_option("--min-count", prepare_opts.min_count, "k-core threshold");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic market pair");
  forec::cli::SynthOptions synth_opts;
  std::string synth_config_path;
  std::int64_t synth_seed = -1;
  synth->add_option("--config", synth_config_path, "experiment config with a data.synth block");
  synth->add_option("--out", synth_opts.out_dir, "output directory")->required();
  synth->add_option("--seed", synth_seed, "override the generator seed");
  synth->add_option("--rho", synth_opts.config.correlation, "cross-market correlation");
  synth->add_flag("!--no-prepare", synth_opts.prepare, "skip the prepare step");

  // train
  auto* train = app.add_subcommand("train", "train a method and persist checkpoints");
  std::string train_config_path, train_method, train_source, train_target, train_out;
  std::int64_t train_seed = -1;
  bool train_resume = false;
  train->add_option("--config", train_config_path, "experiment config (json)")->required();
  train->add_option("--method", train_method, "override: method to train");
  train->add_option("--source", train_source, "override: source market");
  train->add_option("--target", train_target, "override: target market");
  train->add_option("--out", train_out, "override: output directory");
  train->add_option("--seed", train_seed, "override: seed");
  train->add_flag("--resume", train_resume, "reuse existing stage checkpoints");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a prepared market");
  forec::cli::EvalOptions eval_opts;
  std::int64_t eval_seed = -1;
  eval_cmd->add_option("--checkpoint", eval_opts.checkpoint, "checkpoint prefix")->required();
  eval_cmd->add_option("--data", eval_opts.prepared_dir, "prepared data directory")->required();
  eval_cmd->add_option("--target", eval_opts.target, "market to evaluate")->required();
  eval_cmd->add_option("--out", eval_opts.out_dir, "output directory")->required();
  eval_cmd->add_option("--k", eval_opts.k, "rank cutoff");
  eval_cmd->add_option("--negatives", eval_opts.negatives, "evaluation negatives per user");
  eval_cmd->add_option("--seed", eval_seed, "negative-sampling seed");
  eval_cmd->add_option("--groups", eval_opts.groups, "emit a per-group report with N groups");
  eval_cmd->add_option("--compare", eval_opts.compare_per_user,
                       "per_user.tsv of another run for a paired t-test");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "train and evaluate a method x source grid");
  std::string sweep_config_path, sweep_target, sweep_out, sweep_fixed;
  std::vector<std::string> sweep_methods, sweep_sources;
  std::int64_t sweep_seed = -1;
  long sweep_workers = 1;
  sweep->add_option("--config", sweep_config_path, "experiment config (json)")->required();
  sweep->add_option("--methods", sweep_methods, "methods to sweep")->delimiter(',');
  sweep->add_option("--sources", sweep_sources, "source markets to sweep")->delimiter(',');
  sweep->add_option("--fixed-source", sweep_fixed, "source for the fixed-source column");
  sweep->add_option("--target", sweep_target, "override: target market");
  sweep->add_option("--out", sweep_out, "override: output directory");
  sweep->add_option("--seed", sweep_seed, "override: seed");
  sweep->add_option("--workers", sweep_workers, "concurrent runs");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "cross-market descriptive statistics");
  std::vector<std::string> analyze_markets;
  forec::cli::AnalyzeOptions analyze_opts;
  analyze->add_option("markets", analyze_markets, "market ratings as code=path")->required();
  analyze->add_option("--out", analyze_opts.out_dir, "output directory")->required();
  analyze->add_flag("--kcore", analyze_opts.apply_kcore, "apply the 5-core before counting");
  analyze->add_option("--min-count", analyze_opts.min_count, "k-core threshold");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*prepare) {
      prepare_opts.markets = parse_market_args(prepare_markets);
      const auto summary = forec::cli::cmd_prepare(prepare_opts);
      std::cout << "prepared " << summary.dir << "\n";
      for (const auto& [code, users] : summary.users_after) {
        std::cout << "  " << code << ": users " << summary.users_before.at(code) << " -> "
                  << users << ", items " << summary.items_before.at(code) << " -> "
                  << summary.items_after.at(code) << ", interactions "
                  << summary.interactions_after.at(code) << "\n";
      }
    } else if (*synth) {
      if (!synth_config_path.empty()) {
        const auto cfg = forec::cli::load_experiment_config(synth_config_path);
        if (!cfg.synth) throw std::invalid_argument("config has no data.synth block");
        const double rho = synth_opts.config.correlation;
        synth_opts.config = *cfg.synth;
        if (synth->count("--rho")) synth_opts.config.correlation = rho;
      }
      if (synth_seed >= 0) synth_opts.config.seed = static_cast<std::uint64_t>(synth_seed);
      const auto summary = forec::cli::cmd_synth(synth_opts);
      std::cout << "wrote " << summary.source_path << " and " << summary.target_path << "\n";
      if (!summary.prepared_dir.empty()) std::cout << "prepared " << summary.prepared_dir << "\n";
    } else if (*train) {
      auto cfg = forec::cli::load_experiment_config(train_config_path);
      apply_overrides(cfg, train_method, train_source, train_target, train_out, train_seed);
      const auto outcome = forec::cli::cmd_train(cfg, train_resume);
      std::cout << "trained " << cfg.method << " -> " << outcome.final_checkpoint << "\n";
      for (const auto& w : outcome.warnings) std::cout << "  warning: " << w << "\n";
    } else if (*eval_cmd) {
      if (eval_seed >= 0) eval_opts.seed = static_cast<std::uint64_t>(eval_seed);
      const auto outcome = forec::cli::cmd_eval(eval_opts);
      std::ifstream report(outcome.report_path);
      std::cout << report.rdbuf();
    } else if (*sweep) {
      forec::cli::SweepOptions opts;
      opts.base = forec::cli::load_experiment_config(sweep_config_path);
      apply_overrides(opts.base, "", "", sweep_target, sweep_out, sweep_seed);
      opts.methods = sweep_methods;
      opts.sources = sweep_sources;
      opts.fixed_source = sweep_fixed;
      opts.workers = sweep_workers;
      const auto outcome = forec::cli::cmd_sweep(opts);
      std::cout << "sweep table: " << outcome.table_path << "\n";
      for (const auto& cell : outcome.cells) {
        if (!cell.ok) {
          std::cout << "  failed " << cell.method
                    << (cell.source.empty() ? "" : " (src " + cell.source + ")") << ": "
                    << cell.error << "\n";
        }
      }
      for (const auto& row : outcome.rows) {
        std::cout << "  " << row.method << ": best-src(" << row.best_source
                  << ") nDCG=" << row.best_src_ndcg << (row.wins_best ? "*" : "")
                  << "  ave-src nDCG=" << row.ave_src_ndcg << (row.wins_ave ? "*" : "");
        if (row.has_fix) std::cout << "  fix-src nDCG=" << row.fix_src_ndcg << (row.wins_fix ? "*" : "");
        std::cout << "\n";
      }
    } else if (*analyze) {
      analyze_opts.markets = parse_market_args(analyze_markets);
      const auto outcome = forec::cli::cmd_analyze(analyze_opts);
      std::cout << "similarity matrix (" << outcome.similarity_path << "):\n";
      for (size_t i = 0; i < outcome.codes.size(); ++i) {
        std::cout << "  " << outcome.codes[i];
        for (size_t j = 0; j < outcome.codes.size(); ++j) {
          std::cout << (j ? " " : ": ") << std::fixed << std::setprecision(4)
                    << outcome.similarity[i][j];
        }
        std::cout << "\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
