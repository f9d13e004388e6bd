#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "forec/checkpoint.hpp"
#include "forec/cli.hpp"
#include "forec/hash.hpp"

using namespace forec::cli;
namespace fs = std::filesystem;

namespace {

std::string scratch(const std::string& name) {
  const std::string dir = (fs::temp_directory_path() / "forec_cli_tests").string();
  fs::create_directories(dir);
  return dir + "/" + name;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small but eval-friendly synthetic pair (about 60 target users, catalog
// large enough for 40 evaluation negatives).
ExperimentConfig small_experiment(const std::string& out) {
  ExperimentConfig cfg;
  forec::synth::SynthConfig s;
  s.n_items = 160;
  s.n_users_source = 220;
  s.n_users_target = 70;
  s.seed = 4;
  s.correlation = 0.9;
  cfg.synth = s;
  cfg.train.epochs = 2;
  cfg.forec.warmup_epochs = 1;
  cfg.forec.finetune_epochs = 2;
  cfg.maml.meta_iterations = 8;
  cfg.eval_negatives = 40;
  cfg.seed = 9;
  cfg.out_dir = out;
  return cfg;
}

}  // namespace

TEST_CASE("config parsing: defaults, overrides, unknown keys") {
  const ExperimentConfig cfg = parse_experiment_config(R"({
    "data": {"prepared_dir": "prep"},
    "method": "forec",
    "target": "de",
    "source": "us",
    "train": {"epochs": 7},
    "seed": 42
  })");
  CHECK(cfg.method == "forec");
  CHECK(cfg.train.epochs == 7);
  CHECK(cfg.train.lr == 0.01);       // defaults materialized
  CHECK(cfg.train.gmf_lr == 0.005);
  CHECK(cfg.train.l2 == 1e-7);
  CHECK(cfg.maml.meta_lr == 0.1);
  CHECK(cfg.maml.shots == 20);
  CHECK(cfg.forec.finetune_l2 == 0.001);
  CHECK(cfg.forec.head_widths == std::vector<long>{16, 32, 16});
  CHECK(cfg.eval_k == 10);
  CHECK(cfg.eval_negatives == 99);

  // resolved config serializes with every default present
  const std::string dumped = experiment_config_json(cfg);
  CHECK(dumped.find("\"gmf_lr\": 0.005") != std::string::npos);
  CHECK(dumped.find("\"warmup_epochs\": 5") != std::string::npos);

  CHECK_THROWS_WITH_AS(parse_experiment_config(R"({"methd": "nmf"})"),
                       doctest::Contains("unknown key"), std::invalid_argument);
  CHECK_THROWS_AS(parse_experiment_config(R"({"method": "ncf"})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_experiment_config(R"({"train": {"optimizer": "lbfgs"}})"),
                  std::invalid_argument);
}

TEST_CASE("prepare is idempotent and records survivor counts") {
  // synthesize a pair of ratings files first
  SynthOptions synth_opts;
  synth_opts.config.n_items = 150;
  synth_opts.config.n_users_source = 150;
  synth_opts.config.n_users_target = 60;
  synth_opts.config.seed = 21;
  synth_opts.out_dir = scratch("synth_data");
  synth_opts.prepare = false;
  const SynthSummary s = cmd_synth(synth_opts);

  PrepareOptions p1;
  p1.markets = {{"src", s.source_path}, {"tgt", s.target_path}};
  p1.out_dir = scratch("prep_a");
  PrepareOptions p2 = p1;
  p2.out_dir = scratch("prep_b");
  const PrepareSummary r1 = cmd_prepare(p1);
  const PrepareSummary r2 = cmd_prepare(p2);

  for (const std::string f :
       {"items.tsv", "markets.tsv", "src.train.tsv", "tgt.train.tsv", "tgt.test.tsv"}) {
    CHECK(forec::hash_file(p1.out_dir + "/" + f) == forec::hash_file(p2.out_dir + "/" + f));
  }
  CHECK(r1.users_after.at("tgt") > 0);
  CHECK(r1.users_before.at("tgt") == 60);

  const std::string manifest = slurp(r1.manifest_path);
  CHECK(manifest.find("survivors") != std::string::npos);
  CHECK(manifest.find("users_after") != std::string::npos);
  CHECK(manifest.find("leave-one-out") != std::string::npos);
}

TEST_CASE("train dispatch, stage checkpoints, deterministic metrics") {
  const std::string base_dir = scratch("train_a");
  fs::remove_all(base_dir);
  ExperimentConfig cfg = small_experiment(base_dir);
  cfg.method = "forec";

  const TrainOutcome t1 = cmd_train(cfg);
  REQUIRE(t1.stages.size() == 3);
  CHECK(t1.stages[0].first == "pretrain");
  CHECK(t1.stages[1].first == "fork");
  CHECK(t1.stages[2].first == "finetune");
  for (const auto& [name, prefix] : t1.stages) {
    CHECK(fs::exists(prefix + ".manifest"));
    CHECK(fs::exists(prefix + ".payload"));
  }
  CHECK(fs::exists(t1.loss_history_path));
  const std::string manifest = slurp(t1.manifest_path);
  CHECK(manifest.find("\"command\": \"train\"") != std::string::npos);
  CHECK(manifest.find("\"seed\": 9") != std::string::npos);

  // identical rerun into another directory: bit-identical checkpoints
  const std::string base_dir2 = scratch("train_b");
  fs::remove_all(base_dir2);
  ExperimentConfig cfg2 = small_experiment(base_dir2);
  cfg2.method = "forec";
  const TrainOutcome t2 = cmd_train(cfg2);
  CHECK(forec::model::checkpoint_hash(t1.final_checkpoint) ==
        forec::model::checkpoint_hash(t2.final_checkpoint));

  // resume reuses the persisted stages and lands on the same bits
  fs::remove(base_dir2 + "/final.manifest");
  fs::remove(base_dir2 + "/final.payload");
  const TrainOutcome t3 = cmd_train(cfg2, /*resume=*/true);
  CHECK(forec::model::checkpoint_hash(t3.final_checkpoint) ==
        forec::model::checkpoint_hash(t1.final_checkpoint));

  // evaluation of both runs agrees bit-for-bit
  EvalOptions ev;
  ev.checkpoint = t1.final_checkpoint;
  ev.prepared_dir = base_dir + "/data/prepared";
  ev.target = "tgt";
  ev.out_dir = base_dir + "/eval";
  ev.negatives = 40;
  ev.groups = 5;
  const EvalOutcome e1 = cmd_eval(ev);
  EvalOptions ev2 = ev;
  ev2.checkpoint = t3.final_checkpoint;
  ev2.prepared_dir = base_dir2 + "/data/prepared";
  ev2.out_dir = base_dir2 + "/eval";
  const EvalOutcome e2 = cmd_eval(ev2);
  CHECK(e1.test.ndcg == e2.test.ndcg);
  CHECK(e1.test.hr == e2.test.hr);

  // report and metrics files carry provenance and the 5 group rows
  const std::string metrics = slurp(e1.metrics_path);
  CHECK(metrics.find("# seed=") != std::string::npos);
  CHECK(metrics.find("data=") != std::string::npos);
  CHECK(metrics.find("ndcg@10_test") != std::string::npos);
  const std::string groups = slurp(base_dir + "/eval/groups.tsv");
  long rows = 0;
  std::istringstream gs(groups);
  std::string line;
  while (std::getline(gs, line)) {
    if (!line.empty() && line[0] != '#' && line.rfind("group", 0) != 0) ++rows;
  }
  CHECK(rows == 5);
}

TEST_CASE("method=nmf reproduces the single-market recipe") {
  const std::string dir = scratch("train_nmf");
  fs::remove_all(dir);
  ExperimentConfig cfg = small_experiment(dir);
  cfg.method = "nmf";
  const TrainOutcome t = cmd_train(cfg);

  const auto prepared = forec::data::load_prepared(dir + "/data/prepared");
  const auto& tgt = prepared.market("tgt");
  forec::train::TrainConfig base = cfg.train;
  base.seed = forec::Rng::derive(cfg.seed, "train");
  const forec::train::MarketView tview{&tgt, 0};
  const forec::model::Model direct = forec::train::train_nmf_recipe(
      tview, tview, cfg.model, base, forec::train::DataRegime::Single, tgt.n_users());

  const forec::model::Model saved = forec::model::load_model(t.final_checkpoint);
  CHECK(saved.params.bits_equal(direct.params));
}

TEST_CASE("eval rejects checkpoints whose vocabulary disagrees") {
  const std::string dir = scratch("train_small");
  fs::remove_all(dir);
  ExperimentConfig cfg = small_experiment(dir);
  cfg.method = "gmf";
  const TrainOutcome t = cmd_train(cfg);

  // a second prepared dir with a different item vocabulary
  SynthOptions synth_opts;
  synth_opts.config.n_items = 150;
  synth_opts.config.n_users_source = 150;
  synth_opts.config.n_users_target = 60;
  synth_opts.config.seed = 77;
  synth_opts.out_dir = scratch("other_data");
  const SynthSummary s = cmd_synth(synth_opts);

  EvalOptions ev;
  ev.checkpoint = t.final_checkpoint;
  ev.prepared_dir = s.prepared_dir;
  ev.target = "tgt";
  ev.out_dir = scratch("bad_eval");
  CHECK_THROWS_WITH_AS(cmd_eval(ev), doctest::Contains("items"), std::invalid_argument);
}

TEST_CASE("sweep: single cell equals cmd_eval, averages recompute") {
  const std::string dir = scratch("sweep");
  fs::remove_all(dir);
  SweepOptions opts;
  opts.base = small_experiment(dir);
  opts.methods = {"nmf", "nmf++"};
  opts.sources = {"src"};
  opts.fixed_source = "src";
  const SweepOutcome out = cmd_sweep(opts);

  REQUIRE(out.cells.size() == 2);
  for (const SweepCell& c : out.cells) {
    REQUIRE_MESSAGE(c.ok, c.error);
  }
  REQUIRE(out.rows.size() == 2);

  // single-cell method: every column equals that cell's test metrics
  const SweepCell* nmf_cell = nullptr;
  for (const SweepCell& c : out.cells) {
    if (c.method == "nmf") nmf_cell = &c;
  }
  REQUIRE(nmf_cell != nullptr);
  const SweepRow& nmf_row = out.rows[0];
  CHECK(nmf_row.method == "nmf");
  CHECK(nmf_row.best_src_ndcg == nmf_cell->test_ndcg);
  CHECK(nmf_row.ave_src_ndcg == nmf_cell->test_ndcg);
  CHECK(nmf_row.fix_src_ndcg == nmf_cell->test_ndcg);

  // the cell metrics equal a direct cmd_eval of the cell checkpoint
  EvalOptions ev;
  ev.checkpoint = dir + "/cells/nmf/final";
  ev.prepared_dir = dir + "/data/prepared";
  ev.target = "tgt";
  ev.out_dir = scratch("sweep_check");
  ev.negatives = 40;
  ev.seed = opts.base.seed;  // the sweep evaluates with the experiment seed
  const EvalOutcome direct = cmd_eval(ev);
  CHECK(direct.test.ndcg == nmf_cell->test_ndcg);

  // ave-src over a single source equals that source's cell; with the cell
  // list available, recompute the mean explicitly
  const SweepRow& pp_row = out.rows[1];
  double sum = 0;
  long n = 0;
  for (const SweepCell& c : out.cells) {
    if (c.method == "nmf++" && c.ok) {
      sum += c.test_ndcg;
      ++n;
    }
  }
  CHECK(pp_row.ave_src_ndcg == sum / static_cast<double>(n));
  CHECK(fs::exists(out.table_path));
}

TEST_CASE("a fresh model evaluates near random on default-size synthetic data") {
  SynthOptions synth_opts;  // default sizes: catalog supports 99 negatives
  synth_opts.config.seed = 3;
  synth_opts.out_dir = scratch("fresh_data");
  const SynthSummary s = cmd_synth(synth_opts);

  const auto prepared = forec::data::load_prepared(s.prepared_dir);
  const auto& tgt = prepared.market("tgt");
  forec::model::ModelConfig mcfg;
  const forec::model::Model fresh =
      forec::model::make_gmf(tgt.n_users(), tgt.n_items_global, mcfg, 99);
  const std::string ckpt = scratch("fresh_ckpt");
  forec::model::save_model(fresh, ckpt);

  EvalOptions ev;
  ev.checkpoint = ckpt;
  ev.prepared_dir = s.prepared_dir;
  ev.target = "tgt";
  ev.out_dir = scratch("fresh_eval");
  const EvalOutcome out = cmd_eval(ev);
  CHECK(out.test.evaluated_users > 150);
  CHECK(out.test.skipped_users.empty());
  CHECK(std::fabs(out.test.hr - 0.1) <= 0.03);

  // paired t-test of a run against itself: t = 0, p = 1
  EvalOptions ev2 = ev;
  ev2.out_dir = scratch("fresh_eval2");
  ev2.compare_per_user = out.per_user_path;
  const EvalOutcome out2 = cmd_eval(ev2);
  REQUIRE(out2.significance.has_value());
  CHECK(out2.significance->t == 0.0);
  CHECK(out2.significance->p == 1.0);
}

TEST_CASE("analyze emits similarity and rating files") {
  SynthOptions synth_opts;
  synth_opts.config.n_items = 150;
  synth_opts.config.n_users_source = 120;
  synth_opts.config.n_users_target = 60;
  synth_opts.config.seed = 31;
  synth_opts.out_dir = scratch("analyze_data");
  synth_opts.prepare = false;
  const SynthSummary s = cmd_synth(synth_opts);

  AnalyzeOptions opts;
  opts.markets = {{"src", s.source_path}, {"tgt", s.target_path}};
  opts.out_dir = scratch("analyze_out");
  const AnalyzeOutcome out = cmd_analyze(opts);

  REQUIRE(out.codes == std::vector<std::string>{"src", "tgt"});
  CHECK(out.similarity[0][0] == 1.0);
  CHECK(out.similarity[0][1] == out.similarity[1][0]);
  CHECK(out.similarity[0][1] > 0.0);
  CHECK(out.similarity[0][1] <= 1.0);
  CHECK(fs::exists(out.similarity_path));
  CHECK(fs::exists(out.ratings_path));
  CHECK(fs::exists(opts.out_dir + "/src.item_counts.tsv"));
  const std::string dist = slurp(out.ratings_path);
  CHECK(dist.find("stars5") != std::string::npos);
}
