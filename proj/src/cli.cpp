#include "forec/cli.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "forec/analysis.hpp"
#include "forec/checkpoint.hpp"
#include "forec/hash.hpp"
#include "forec/version.hpp"

namespace forec::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string> kMethods = {"gmf",   "mlp",   "nmf",  "gmf++", "mlp++",
                                           "nmf++", "maml",  "forec", "nmf-forec"};

void require_key_known(const json& obj, const std::set<std::string>& known,
                       const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!known.count(key)) {
      throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
    }
  }
}

std::vector<long> long_list(const json& j) {
  std::vector<long> out;
  for (const auto& v : j) out.push_back(v.get<long>());
  return out;
}

synth::SynthConfig parse_synth(const json& j) {
  synth::SynthConfig cfg;
  require_key_known(j,
                    {"n_items", "n_users_source", "n_users_target", "latent_dim",
                     "correlation", "interactions_min", "interactions_max", "noise_std",
                     "seed", "source_code", "target_code"},
                    "data.synth");
  if (j.contains("n_items")) cfg.n_items = j["n_items"].get<long>();
  if (j.contains("n_users_source")) cfg.n_users_source = j["n_users_source"].get<long>();
  if (j.contains("n_users_target")) cfg.n_users_target = j["n_users_target"].get<long>();
  if (j.contains("latent_dim")) cfg.latent_dim = j["latent_dim"].get<long>();
  if (j.contains("correlation")) cfg.correlation = j["correlation"].get<double>();
  if (j.contains("interactions_min")) cfg.interactions_min = j["interactions_min"].get<long>();
  if (j.contains("interactions_max")) cfg.interactions_max = j["interactions_max"].get<long>();
  if (j.contains("noise_std")) cfg.noise_std = j["noise_std"].get<double>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("source_code")) cfg.source_code = j["source_code"].get<std::string>();
  if (j.contains("target_code")) cfg.target_code = j["target_code"].get<std::string>();
  return cfg;
}

json synth_json(const synth::SynthConfig& cfg) {
  return json{{"n_items", cfg.n_items},
              {"n_users_source", cfg.n_users_source},
              {"n_users_target", cfg.n_users_target},
              {"latent_dim", cfg.latent_dim},
              {"correlation", cfg.correlation},
              {"interactions_min", cfg.interactions_min},
              {"interactions_max", cfg.interactions_max},
              {"noise_std", cfg.noise_std},
              {"seed", cfg.seed},
              {"source_code", cfg.source_code},
              {"target_code", cfg.target_code}};
}

}  // namespace

const std::vector<std::string>& known_methods() { return kMethods; }

bool is_cross_market(const std::string& method) {
  return method != "gmf" && method != "mlp" && method != "nmf";
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  const json j = json::parse(json_text);
  ExperimentConfig cfg;
  require_key_known(j,
                    {"data", "method", "target", "source", "model", "train", "maml",
                     "forec", "eval", "seed", "out"},
                    "top level");
  if (j.contains("data")) {
    require_key_known(j["data"], {"prepared_dir", "synth"}, "data");
    if (j["data"].contains("prepared_dir")) {
      cfg.prepared_dir = j["data"]["prepared_dir"].get<std::string>();
    }
    if (j["data"].contains("synth")) cfg.synth = parse_synth(j["data"]["synth"]);
  }
  if (j.contains("method")) cfg.method = j["method"].get<std::string>();
  if (j.contains("target")) cfg.target = j["target"].get<std::string>();
  if (j.contains("source")) cfg.source = j["source"].get<std::string>();
  if (j.contains("model")) {
    const json& m = j["model"];
    require_key_known(m, {"embed_dim", "tower", "fusion_alpha", "init_std"}, "model");
    if (m.contains("embed_dim")) cfg.model.embed_dim = m["embed_dim"].get<long>();
    if (m.contains("tower")) cfg.model.tower = long_list(m["tower"]);
    if (m.contains("fusion_alpha")) cfg.model.fusion_alpha = m["fusion_alpha"].get<double>();
    if (m.contains("init_std")) cfg.model.init_std = m["init_std"].get<double>();
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    require_key_known(t,
                      {"lr", "gmf_lr", "l2", "epochs", "batch_size", "train_negatives",
                       "optimizer", "neg_scope"},
                      "train");
    if (t.contains("lr")) cfg.train.lr = t["lr"].get<double>();
    if (t.contains("gmf_lr")) cfg.train.gmf_lr = t["gmf_lr"].get<double>();
    if (t.contains("l2")) cfg.train.l2 = t["l2"].get<double>();
    if (t.contains("epochs")) cfg.train.epochs = t["epochs"].get<long>();
    if (t.contains("batch_size")) cfg.train.batch_size = t["batch_size"].get<long>();
    if (t.contains("train_negatives")) cfg.train.train_negatives = t["train_negatives"].get<long>();
    if (t.contains("optimizer")) {
      const std::string o = t["optimizer"].get<std::string>();
      if (o == "adam") {
        cfg.train.optimizer = train::TrainConfig::Optimizer::Adam;
      } else if (o == "sgd") {
        cfg.train.optimizer = train::TrainConfig::Optimizer::Sgd;
      } else {
        throw std::invalid_argument("config: unknown optimizer '" + o + "'");
      }
    }
    if (t.contains("neg_scope")) {
      const std::string s = t["neg_scope"].get<std::string>();
      if (s == "auto") {
        cfg.train.neg_scope = train::TrainConfig::Scope::Auto;
      } else if (s == "market") {
        cfg.train.neg_scope = train::TrainConfig::Scope::Market;
      } else if (s == "global") {
        cfg.train.neg_scope = train::TrainConfig::Scope::Global;
      } else {
        throw std::invalid_argument("config: unknown neg_scope '" + s + "'");
      }
    }
  }
  if (j.contains("maml")) {
    const json& m = j["maml"];
    require_key_known(
        m, {"inner_lr", "meta_lr", "shots", "meta_iterations", "second_order", "hvp_step"},
        "maml");
    if (m.contains("inner_lr")) cfg.maml.inner_lr = m["inner_lr"].get<double>();
    if (m.contains("meta_lr")) cfg.maml.meta_lr = m["meta_lr"].get<double>();
    if (m.contains("shots")) cfg.maml.shots = m["shots"].get<long>();
    if (m.contains("meta_iterations")) cfg.maml.meta_iterations = m["meta_iterations"].get<long>();
    if (m.contains("second_order")) cfg.maml.second_order = m["second_order"].get<bool>();
    if (m.contains("hvp_step")) cfg.maml.hvp_step = m["hvp_step"].get<double>();
  }
  if (j.contains("forec")) {
    const json& f = j["forec"];
    require_key_known(
        f, {"k_freeze", "head", "finetune_l2", "finetune_epochs", "warmup_epochs"}, "forec");
    if (f.contains("k_freeze")) cfg.forec.k_freeze = f["k_freeze"].get<long>();
    if (f.contains("head")) cfg.forec.head_widths = long_list(f["head"]);
    if (f.contains("finetune_l2")) cfg.forec.finetune_l2 = f["finetune_l2"].get<double>();
    if (f.contains("finetune_epochs")) cfg.forec.finetune_epochs = f["finetune_epochs"].get<long>();
    if (f.contains("warmup_epochs")) cfg.forec.warmup_epochs = f["warmup_epochs"].get<long>();
  }
  if (j.contains("eval")) {
    const json& e = j["eval"];
    require_key_known(e, {"k", "negatives"}, "eval");
    if (e.contains("k")) cfg.eval_k = e["k"].get<long>();
    if (e.contains("negatives")) cfg.eval_negatives = e["negatives"].get<long>();
  }
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("out")) cfg.out_dir = j["out"].get<std::string>();

  cfg.maml.inner_lr = j.contains("maml") && j["maml"].contains("inner_lr")
                          ? cfg.maml.inner_lr
                          : cfg.train.lr;  // alpha defaults to the model learning rate
  if (std::find(kMethods.begin(), kMethods.end(), cfg.method) == kMethods.end()) {
    throw std::invalid_argument("config: unknown method '" + cfg.method + "'");
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

namespace {

json experiment_json(const ExperimentConfig& cfg) {
  json data;
  if (!cfg.prepared_dir.empty()) data["prepared_dir"] = cfg.prepared_dir;
  if (cfg.synth) data["synth"] = synth_json(*cfg.synth);
  json j{
      {"data", data},
      {"method", cfg.method},
      {"target", cfg.target},
      {"source", cfg.source},
      {"model",
       {{"embed_dim", cfg.model.embed_dim},
        {"tower", cfg.model.tower},
        {"fusion_alpha", cfg.model.fusion_alpha},
        {"init_std", cfg.model.init_std}}},
      {"train",
       {{"lr", cfg.train.lr},
        {"gmf_lr", cfg.train.gmf_lr},
        {"l2", cfg.train.l2},
        {"epochs", cfg.train.epochs},
        {"batch_size", cfg.train.batch_size},
        {"train_negatives", cfg.train.train_negatives},
        {"optimizer",
         cfg.train.optimizer == train::TrainConfig::Optimizer::Adam ? "adam" : "sgd"},
        {"neg_scope", cfg.train.neg_scope == train::TrainConfig::Scope::Auto
                          ? "auto"
                          : (cfg.train.neg_scope == train::TrainConfig::Scope::Market
                                 ? "market"
                                 : "global")}}},
      {"maml",
       {{"inner_lr", cfg.maml.inner_lr},
        {"meta_lr", cfg.maml.meta_lr},
        {"shots", cfg.maml.shots},
        {"meta_iterations", cfg.maml.meta_iterations},
        {"second_order", cfg.maml.second_order},
        {"hvp_step", cfg.maml.hvp_step}}},
      {"forec",
       {{"k_freeze", cfg.forec.k_freeze},
        {"head", cfg.forec.head_widths},
        {"finetune_l2", cfg.forec.finetune_l2},
        {"finetune_epochs", cfg.forec.finetune_epochs},
        {"warmup_epochs", cfg.forec.warmup_epochs}}},
      {"eval", {{"k", cfg.eval_k}, {"negatives", cfg.eval_negatives}}},
      {"seed", cfg.seed},
      {"out", cfg.out_dir},
  };
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string write_manifest(const std::string& out_dir, const std::string& command,
                           const json& config,
                           const std::vector<std::pair<std::string, std::string>>& inputs,
                           const std::vector<std::string>& output_files,
                           const std::vector<std::string>& warnings) {
  json inputs_j = json::object();
  for (const auto& [path, hash] : inputs) inputs_j[path] = hash;
  json outputs_j = json::object();
  for (const std::string& rel : output_files) {
    outputs_j[rel] = hash_file(out_dir + "/" + rel);
  }
  const json manifest{{"command", command}, {"version", kVersion},
                      {"config", config},   {"inputs", inputs_j},
                      {"outputs", outputs_j}, {"warnings", warnings}};
  const std::string path = out_dir + "/manifest.json";
  write_text(path, manifest.dump(2) + "\n");
  return path;
}

}  // namespace

std::string experiment_config_json(const ExperimentConfig& config) {
  return experiment_json(config).dump(2) + "\n";
}

PrepareSummary cmd_prepare(const PrepareOptions& options) {
  if (options.markets.empty()) throw std::invalid_argument("prepare: no markets given");
  if (options.out_dir.empty()) throw std::invalid_argument("prepare: no output directory");
  fs::create_directories(options.out_dir);

  PrepareSummary summary;
  summary.dir = options.out_dir;
  std::vector<std::pair<std::string, std::string>> inputs;
  std::vector<data::MarketDataset> datasets;
  std::vector<std::string> warnings;
  std::set<std::string> seen_users;

  for (const auto& [code, path] : options.markets) {
    inputs.emplace_back(path, hash_file(path));
    const auto records = data::load_ratings(path, code);
    std::set<std::string> users, items;
    for (const auto& r : records) {
      users.insert(r.user_id);
      items.insert(r.item_id);
    }
    summary.users_before[code] = static_cast<long>(users.size());
    summary.items_before[code] = static_cast<long>(items.size());

    const auto filtered = data::kcore_filter(records, options.min_count);
    auto ds = data::build_market_dataset(filtered, code);
    summary.users_after[code] = ds.n_users();
    summary.items_after[code] = ds.items->size();
    summary.interactions_after[code] = static_cast<long>(ds.interactions.size());
    for (const std::string& u : ds.user_ids) {
      if (!seen_users.insert(u).second) {
        warnings.push_back("user id '" + u + "' appears in multiple markets; treated as distinct per-market users");
      }
    }
    datasets.push_back(std::move(ds));
  }

  data::PreparedData prepared;
  prepared.items = data::align_items(datasets);
  for (const auto& ds : datasets) prepared.markets.push_back(data::leave_one_out_split(ds));
  data::save_prepared(options.out_dir, prepared);

  json config{{"min_count", options.min_count},
              {"split", "leave-one-out: latest interaction to test, second-latest to validation"}};
  json markets_j = json::object();
  for (const auto& [code, path] : options.markets) markets_j[code] = path;
  config["markets"] = markets_j;
  json stats = json::object();
  for (const auto& [code, n] : summary.users_after) {
    stats[code] = {{"users_before", summary.users_before[code]},
                   {"users_after", n},
                   {"items_before", summary.items_before[code]},
                   {"items_after", summary.items_after[code]},
                   {"interactions_after", summary.interactions_after[code]}};
  }
  config["survivors"] = stats;

  std::vector<std::string> outputs = {"items.tsv", "markets.tsv"};
  for (const auto& m : prepared.markets) {
    outputs.push_back(m.market_code + ".users.tsv");
    outputs.push_back(m.market_code + ".train.tsv");
    outputs.push_back(m.market_code + ".valid.tsv");
    outputs.push_back(m.market_code + ".test.tsv");
  }
  summary.manifest_path =
      write_manifest(options.out_dir, "prepare", config, inputs, outputs, warnings);
  return summary;
}

SynthSummary cmd_synth(const SynthOptions& options) {
  if (options.out_dir.empty()) throw std::invalid_argument("synth: no output directory");
  fs::create_directories(options.out_dir);
  const synth::SynthPair pair = synth::generate_pair_records(options.config);

  SynthSummary summary;
  summary.source_path = options.out_dir + "/" + options.config.source_code + ".tsv";
  summary.target_path = options.out_dir + "/" + options.config.target_code + ".tsv";
  data::write_ratings(summary.source_path, pair.source);
  data::write_ratings(summary.target_path, pair.target);

  std::vector<std::string> outputs = {options.config.source_code + ".tsv",
                                      options.config.target_code + ".tsv"};
  if (options.prepare) {
    PrepareOptions prep;
    prep.markets = {{options.config.source_code, summary.source_path},
                    {options.config.target_code, summary.target_path}};
    prep.out_dir = options.out_dir + "/prepared";
    cmd_prepare(prep);
    summary.prepared_dir = prep.out_dir;
  }
  summary.manifest_path = write_manifest(options.out_dir, "synth", synth_json(options.config),
                                         {}, outputs, {});
  return summary;
}

namespace {

struct LoadedData {
  data::PreparedData prepared;
  std::string dir;
};

LoadedData load_data(const ExperimentConfig& cfg) {
  LoadedData out;
  if (!cfg.prepared_dir.empty()) {
    out.dir = cfg.prepared_dir;
    out.prepared = data::load_prepared(cfg.prepared_dir);
    return out;
  }
  if (!cfg.synth) {
    throw std::invalid_argument("config: data needs either prepared_dir or synth");
  }
  SynthOptions synth_opts;
  synth_opts.config = *cfg.synth;
  synth_opts.out_dir = cfg.out_dir + "/data";
  const SynthSummary s = cmd_synth(synth_opts);
  out.dir = s.prepared_dir;
  out.prepared = data::load_prepared(s.prepared_dir);
  return out;
}

std::string resolve_target(const ExperimentConfig& cfg) {
  if (!cfg.target.empty()) return cfg.target;
  if (cfg.synth) return cfg.synth->target_code;
  throw std::invalid_argument("config: no target market given");
}

std::string resolve_source(const ExperimentConfig& cfg) {
  if (!cfg.source.empty()) return cfg.source;
  if (cfg.synth) return cfg.synth->source_code;
  throw std::invalid_argument("config: method '" + cfg.method + "' needs a source market");
}

}  // namespace

TrainOutcome cmd_train(const ExperimentConfig& config, bool resume) {
  fs::create_directories(config.out_dir);
  const LoadedData loaded = load_data(config);
  const std::string target_code = resolve_target(config);
  const data::SplitDataset& tgt = loaded.prepared.market(target_code);
  const bool cross = is_cross_market(config.method);
  const data::SplitDataset* src = cross ? &loaded.prepared.market(resolve_source(config)) : nullptr;
  if (cross && src->market_code == tgt.market_code) {
    throw std::invalid_argument("train: source and target markets must differ");
  }

  train::TrainConfig base = config.train;
  base.seed = Rng::derive(config.seed, "train");
  const long n_users = cross ? tgt.n_users() + src->n_users() : tgt.n_users();
  const long n_items = tgt.n_items_global;
  const train::MarketView tview{&tgt, 0};
  const train::MarketView sview{cross ? src : nullptr, tgt.n_users()};

  train::ForecConfig fcfg = config.forec;
  fcfg.maml = config.maml;

  TrainOutcome outcome;
  model::Model final_model;
  const std::string final_prefix = config.out_dir + "/final";
  const std::string pretrain_prefix = config.out_dir + "/stage_pretrain";
  const std::string fork_prefix = config.out_dir + "/stage_fork";
  std::vector<double> loss_history;

  auto exists = [](const std::string& prefix) {
    return fs::exists(prefix + ".manifest") && fs::exists(prefix + ".payload");
  };

  const std::string& method = config.method;
  if (method == "gmf" || method == "mlp") {
    train::TrainConfig c = base;
    c.seed = Rng::derive(base.seed, method + "-train");
    model::Model m = method == "gmf"
                         ? model::make_gmf(n_users, n_items, config.model,
                                           Rng::derive(base.seed, "gmf"))
                         : model::make_mlp(n_users, n_items, config.model,
                                           Rng::derive(base.seed, "mlp"));
    const train::TrainResult r =
        method == "gmf"
            ? [&] {
                train::TrainConfig g = c;
                g.lr = base.gmf_lr;
                return train::train_single(m, tgt, g);
              }()
            : train::train_single(m, tgt, c);
    loss_history = r.loss_history;
    outcome.warnings = r.warnings;
    final_model = std::move(m);
  } else if (method == "nmf") {
    final_model = train::train_nmf_recipe(tview, tview, config.model, base,
                                          train::DataRegime::Single, n_users);
  } else if (method == "gmf++" || method == "mlp++") {
    train::TrainConfig c = base;
    c.seed = Rng::derive(base.seed, method + "-train");
    if (method == "gmf++") c.lr = base.gmf_lr;
    model::Model m = method == "gmf++"
                         ? model::make_gmf(n_users, n_items, config.model,
                                           Rng::derive(base.seed, "gmf"))
                         : model::make_mlp(n_users, n_items, config.model,
                                           Rng::derive(base.seed, "mlp"));
    const train::TrainResult r = train::train_concat_equal(m, sview, tview, c);
    loss_history = r.loss_history;
    outcome.warnings = r.warnings;
    final_model = std::move(m);
  } else if (method == "nmf++") {
    final_model = train::nmfpp_pretrain_stage(*src, tgt, config.model, base);
  } else if (method == "maml") {
    final_model = train::maml_baseline_train(*src, tgt, config.model, fcfg.maml, base,
                                             fcfg.warmup_epochs);
  } else if (method == "forec" || method == "nmf-forec") {
    model::Model pretrain;
    if (resume && exists(pretrain_prefix)) {
      pretrain = model::load_model(pretrain_prefix);
    } else {
      pretrain = method == "forec"
                     ? train::forec_pretrain_stage(*src, tgt, config.model, fcfg, base)
                     : train::nmfpp_pretrain_stage(*src, tgt, config.model, base);
      model::save_model(pretrain, pretrain_prefix);
    }
    outcome.stages.emplace_back("pretrain", pretrain_prefix);

    model::Model forked;
    if (resume && exists(fork_prefix)) {
      forked = model::load_model(fork_prefix);
    } else {
      forked = train::fork_stage(pretrain, fcfg, base);
      model::save_model(forked, fork_prefix);
    }
    outcome.stages.emplace_back("fork", fork_prefix);

    const train::TrainResult r = train::finetune_stage(forked, tgt, fcfg, base);
    loss_history = r.loss_history;
    outcome.warnings = r.warnings;
    final_model = std::move(forked);
  } else {
    throw std::invalid_argument("train: unknown method '" + method + "'");
  }

  model::save_model(final_model, final_prefix);
  outcome.final_checkpoint = final_prefix;
  outcome.stages.emplace_back("finetune", final_prefix);

  {
    std::ostringstream ss;
    ss << "epoch\tloss\n";
    for (size_t e = 0; e < loss_history.size(); ++e) {
      ss << e << '\t' << std::setprecision(17) << loss_history[e] << '\n';
    }
    outcome.loss_history_path = config.out_dir + "/loss_history.tsv";
    write_text(outcome.loss_history_path, ss.str());
  }

  std::vector<std::pair<std::string, std::string>> inputs;
  inputs.emplace_back(loaded.dir + "/items.tsv", hash_file(loaded.dir + "/items.tsv"));
  inputs.emplace_back("target:" + target_code, data::split_fingerprint(tgt));
  if (cross) inputs.emplace_back("source:" + src->market_code, data::split_fingerprint(*src));

  std::vector<std::string> outputs = {"final.manifest", "final.payload", "loss_history.tsv"};
  if (method == "forec" || method == "nmf-forec") {
    outputs.insert(outputs.end(), {"stage_pretrain.manifest", "stage_pretrain.payload",
                                   "stage_fork.manifest", "stage_fork.payload"});
  }

  json config_json = experiment_json(config);
  {
    // Final metrics on the target market, recorded in the run manifest.
    data::NegativeSampler sampler(tgt, data::NegScope::Market,
                                  Rng::derive(config.seed, "eval-sampler"));
    const eval::MetricReport test = eval::evaluate(eval::model_scorer(final_model), tgt,
                                                   sampler, config.eval_k, eval::Heldout::Test,
                                                   config.eval_negatives);
    const eval::MetricReport valid = eval::evaluate(eval::model_scorer(final_model), tgt,
                                                    sampler, config.eval_k, eval::Heldout::Valid,
                                                    config.eval_negatives);
    config_json["final_metrics"] = {{"hr_test", test.hr},
                                    {"ndcg_test", test.ndcg},
                                    {"hr_valid", valid.hr},
                                    {"ndcg_valid", valid.ndcg},
                                    {"evaluated_users", test.evaluated_users},
                                    {"skipped_users", static_cast<long>(test.skipped_users.size())}};
    json stages_j = json::object();
    for (const auto& [name, prefix] : outcome.stages) {
      stages_j[name] = model::checkpoint_hash(prefix);
    }
    config_json["stage_checkpoints"] = stages_j;
  }
  outcome.manifest_path = write_manifest(config.out_dir, "train", config_json,
                                         inputs, outputs, outcome.warnings);
  return outcome;
}

EvalOutcome cmd_eval(const EvalOptions& options) {
  fs::create_directories(options.out_dir);
  const model::Model m = model::load_model(options.checkpoint);
  const data::PreparedData prepared = data::load_prepared(options.prepared_dir);
  const data::SplitDataset& tgt = prepared.market(options.target);

  if (prepared.items->size() != m.n_items) {
    std::string offenders;
    for (long i = m.n_items; i < prepared.items->size() && i < m.n_items + 3; ++i) {
      offenders += (offenders.empty() ? "" : ", ") + prepared.items->ids[static_cast<size_t>(i)];
    }
    throw std::invalid_argument(
        "eval: checkpoint expects " + std::to_string(m.n_items) + " items but the prepared data has " +
        std::to_string(prepared.items->size()) +
        (offenders.empty() ? "" : " (e.g. " + offenders + ")"));
  }
  if (tgt.n_users() > m.n_users) {
    throw std::invalid_argument("eval: checkpoint expects at most " + std::to_string(m.n_users) +
                                " users but market '" + options.target + "' has " +
                                std::to_string(tgt.n_users()) +
                                " (e.g. " + tgt.user_ids.back() + ")");
  }

  // Evaluation candidates come from the target market's own catalog.
  data::NegativeSampler sampler(tgt, data::NegScope::Market,
                                Rng::derive(options.seed, "eval-sampler"));
  const eval::ScoreFn scorer = eval::model_scorer(m);

  EvalOutcome outcome;
  outcome.test = eval::evaluate(scorer, tgt, sampler, options.k, eval::Heldout::Test,
                                options.negatives);
  outcome.valid = eval::evaluate(scorer, tgt, sampler, options.k, eval::Heldout::Valid,
                                 options.negatives);

  const std::string ckpt_hash = model::checkpoint_hash(options.checkpoint);
  const std::string header = "# seed=" + std::to_string(options.seed) +
                             " checkpoint=" + ckpt_hash + " data=" + outcome.test.data_hash +
                             " k=" + std::to_string(options.k) + "\n";
  {
    std::ostringstream ss;
    ss << header << "metric\tvalue\n";
    ss << std::setprecision(17);
    ss << "hr@" << options.k << "_test\t" << outcome.test.hr << '\n';
    ss << "ndcg@" << options.k << "_test\t" << outcome.test.ndcg << '\n';
    ss << "hr@" << options.k << "_valid\t" << outcome.valid.hr << '\n';
    ss << "ndcg@" << options.k << "_valid\t" << outcome.valid.ndcg << '\n';
    ss << "evaluated_users\t" << outcome.test.evaluated_users << '\n';
    ss << "skipped_users\t" << outcome.test.skipped_users.size() << '\n';
    outcome.metrics_path = options.out_dir + "/metrics.tsv";
    write_text(outcome.metrics_path, ss.str());
  }
  {
    std::ostringstream ss;
    ss << header << "user\trank\thr\tndcg\ttrain_count\n";
    ss << std::setprecision(17);
    for (const eval::UserMetric& um : outcome.test.per_user) {
      ss << um.user << '\t' << um.rank << '\t' << um.hr << '\t' << um.ndcg << '\t'
         << um.train_count << '\n';
    }
    outcome.per_user_path = options.out_dir + "/per_user.tsv";
    write_text(outcome.per_user_path, ss.str());
  }

  std::vector<std::string> outputs = {"metrics.tsv", "per_user.tsv"};

  std::ostringstream report;
  report << "market " << options.target << ", " << outcome.test.evaluated_users
         << " users evaluated, " << outcome.test.skipped_users.size() << " skipped\n";
  report << "  test   HR@" << options.k << " = " << std::fixed << std::setprecision(4)
         << outcome.test.hr << "   nDCG@" << options.k << " = " << outcome.test.ndcg << "\n";
  report << "  valid  HR@" << options.k << " = " << outcome.valid.hr << "   nDCG@"
         << options.k << " = " << outcome.valid.ndcg << "\n";

  if (options.groups > 0) {
    const auto groups = eval::group_metrics(outcome.test, options.groups);
    std::ostringstream ss;
    ss << header << "group\tusers\tmean_train\thr\tndcg\n";
    ss << std::setprecision(17);
    for (const eval::GroupReport& g : groups) {
      ss << g.group << '\t' << g.users << '\t' << g.mean_train_count << '\t' << g.hr << '\t'
         << g.ndcg << '\n';
    }
    write_text(options.out_dir + "/groups.tsv", ss.str());
    outputs.push_back("groups.tsv");
    report << "  user groups (coldest to warmest):\n";
    for (const eval::GroupReport& g : groups) {
      report << "    group " << g.group << ": users=" << g.users
             << " mean_train=" << std::setprecision(2) << g.mean_train_count
             << " nDCG=" << std::setprecision(4) << g.ndcg << "\n";
    }
  }

  if (!options.compare_per_user.empty()) {
    std::ifstream in(options.compare_per_user);
    if (!in) throw std::runtime_error("cannot open " + options.compare_per_user);
    std::map<long, double> other;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#' || line.rfind("user\t", 0) == 0) continue;
      std::istringstream ls(line);
      long user = 0, rank = 0;
      double hr = 0, ndcg = 0;
      ls >> user >> rank >> hr >> ndcg;
      other[user] = ndcg;
    }
    std::vector<double> mine, theirs;
    for (const eval::UserMetric& um : outcome.test.per_user) {
      const auto it = other.find(um.user);
      if (it != other.end()) {
        mine.push_back(um.ndcg);
        theirs.push_back(it->second);
      }
    }
    outcome.significance = eval::paired_t_test(mine, theirs);
    report << "  paired t-test vs " << options.compare_per_user << ": t="
           << std::setprecision(4) << outcome.significance->t
           << " df=" << outcome.significance->df << " p=" << outcome.significance->p << "\n";
  }

  outcome.report_path = options.out_dir + "/report.txt";
  write_text(outcome.report_path, report.str());
  outputs.push_back("report.txt");

  const json config{{"checkpoint", options.checkpoint}, {"target", options.target},
                    {"k", options.k},                   {"negatives", options.negatives},
                    {"seed", options.seed},             {"groups", options.groups}};
  std::vector<std::pair<std::string, std::string>> inputs = {
      {options.checkpoint, ckpt_hash}, {"target:" + options.target, outcome.test.data_hash}};
  outcome.manifest_path =
      write_manifest(options.out_dir, "eval", config, inputs, outputs, {});
  return outcome;
}

SweepOutcome cmd_sweep(const SweepOptions& options) {
  if (options.methods.empty()) throw std::invalid_argument("sweep: no methods given");
  const std::string out_dir = options.base.out_dir;
  fs::create_directories(out_dir + "/cells");

  // Generate or load the data once; the cells reuse the prepared directory.
  ExperimentConfig base = options.base;
  {
    const LoadedData loaded = load_data(base);
    base.target = resolve_target(base);
    base.prepared_dir = loaded.dir;
    base.synth.reset();
  }

  std::vector<SweepCell> cells;
  for (const std::string& method : options.methods) {
    if (!is_cross_market(method)) {
      cells.push_back({method, "", false, "", 0, 0, 0});
      continue;
    }
    if (options.sources.empty()) {
      throw std::invalid_argument("sweep: cross-market methods need sources");
    }
    for (const std::string& source : options.sources) {
      cells.push_back({method, source, false, "", 0, 0, 0});
    }
  }

  std::atomic<size_t> next{0};
  auto run_cell = [&](SweepCell& cell) {
    const std::string label = cell.method + (cell.source.empty() ? "" : "__" + cell.source);
    ExperimentConfig cfg = base;
    cfg.method = cell.method;
    cfg.source = cell.source;
    cfg.out_dir = out_dir + "/cells/" + label;
    try {
      const TrainOutcome t = cmd_train(cfg);
      EvalOptions ev;
      ev.checkpoint = t.final_checkpoint;
      ev.prepared_dir = cfg.prepared_dir;
      ev.target = resolve_target(cfg);
      ev.out_dir = cfg.out_dir + "/eval";
      ev.k = cfg.eval_k;
      ev.negatives = cfg.eval_negatives;
      ev.seed = cfg.seed;
      const EvalOutcome e = cmd_eval(ev);
      cell.valid_ndcg = e.valid.ndcg;
      cell.test_ndcg = e.test.ndcg;
      cell.test_hr = e.test.hr;
      cell.ok = true;
    } catch (const std::exception& ex) {
      cell.ok = false;
      cell.error = ex.what();
    }
  };

  const long workers = std::max(1L, options.workers);
  if (workers == 1) {
    for (SweepCell& cell : cells) run_cell(cell);
  } else {
    std::vector<std::thread> pool;
    for (long w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        while (true) {
          const size_t i = next.fetch_add(1);
          if (i >= cells.size()) return;
          run_cell(cells[i]);
        }
      });
    }
    for (std::thread& t : pool) t.join();
  }

  SweepOutcome outcome;
  outcome.cells = cells;
  for (const std::string& method : options.methods) {
    SweepRow row;
    row.method = method;
    double best_valid = -1.0;
    double sum_ndcg = 0.0, sum_hr = 0.0;
    long ok_count = 0;
    for (const SweepCell& cell : cells) {
      if (cell.method != method || !cell.ok) continue;
      ++ok_count;
      sum_ndcg += cell.test_ndcg;
      sum_hr += cell.test_hr;
      if (cell.valid_ndcg > best_valid) {
        best_valid = cell.valid_ndcg;
        row.best_src_ndcg = cell.test_ndcg;
        row.best_src_hr = cell.test_hr;
        row.best_source = cell.source;
      }
      if (!options.fixed_source.empty() && cell.source == options.fixed_source) {
        row.fix_src_ndcg = cell.test_ndcg;
        row.fix_src_hr = cell.test_hr;
        row.has_fix = true;
      }
      if (cell.source.empty()) {  // single-market methods fill all columns
        row.fix_src_ndcg = cell.test_ndcg;
        row.fix_src_hr = cell.test_hr;
        row.has_fix = true;
      }
    }
    if (ok_count > 0) {
      row.ave_src_ndcg = sum_ndcg / static_cast<double>(ok_count);
      row.ave_src_hr = sum_hr / static_cast<double>(ok_count);
    }
    outcome.rows.push_back(row);
  }

  // winner markers: the best method per scenario column
  if (!outcome.rows.empty()) {
    size_t ib = 0, ia = 0, ifx = 0;
    bool any_fix = false;
    for (size_t i = 0; i < outcome.rows.size(); ++i) {
      if (outcome.rows[i].best_src_ndcg > outcome.rows[ib].best_src_ndcg) ib = i;
      if (outcome.rows[i].ave_src_ndcg > outcome.rows[ia].ave_src_ndcg) ia = i;
      if (outcome.rows[i].has_fix &&
          (!any_fix || outcome.rows[i].fix_src_ndcg > outcome.rows[ifx].fix_src_ndcg)) {
        ifx = i;
        any_fix = true;
      }
    }
    outcome.rows[ib].wins_best = true;
    outcome.rows[ia].wins_ave = true;
    if (any_fix) outcome.rows[ifx].wins_fix = true;
  }

  {
    std::ostringstream ss;
    ss << "method\tbest_source\tbest_src_ndcg\tbest_src_hr\tave_src_ndcg\tave_src_hr"
       << "\tfix_src_ndcg\tfix_src_hr\twinner\n";
    ss << std::setprecision(17);
    for (const SweepRow& r : outcome.rows) {
      ss << r.method << '\t' << (r.best_source.empty() ? "-" : r.best_source) << '\t'
         << r.best_src_ndcg << '\t' << r.best_src_hr << '\t' << r.ave_src_ndcg << '\t'
         << r.ave_src_hr << '\t';
      if (r.has_fix) {
        ss << r.fix_src_ndcg << '\t' << r.fix_src_hr;
      } else {
        ss << "-\t-";
      }
      std::string marks;
      if (r.wins_best) marks += "best";
      if (r.wins_ave) marks += marks.empty() ? "ave" : ",ave";
      if (r.wins_fix) marks += marks.empty() ? "fix" : ",fix";
      ss << '\t' << (marks.empty() ? "-" : marks) << '\n';
    }
    outcome.table_path = out_dir + "/sweep_table.tsv";
    write_text(outcome.table_path, ss.str());
  }

  json cells_j = json::array();
  for (const SweepCell& c : cells) {
    cells_j.push_back({{"method", c.method},
                       {"source", c.source},
                       {"ok", c.ok},
                       {"error", c.error},
                       {"valid_ndcg", c.valid_ndcg},
                       {"test_ndcg", c.test_ndcg},
                       {"test_hr", c.test_hr}});
  }
  json config = experiment_json(base);
  config["sweep"] = {{"methods", options.methods},
                     {"sources", options.sources},
                     {"fixed_source", options.fixed_source},
                     {"workers", options.workers}};
  config["cells"] = cells_j;
  outcome.manifest_path =
      write_manifest(out_dir, "sweep", config, {}, {"sweep_table.tsv"}, {});
  return outcome;
}

AnalyzeOutcome cmd_analyze(const AnalyzeOptions& options) {
  if (options.markets.empty()) throw std::invalid_argument("analyze: no markets given");
  fs::create_directories(options.out_dir);

  AnalyzeOutcome outcome;
  std::vector<std::pair<std::string, std::string>> inputs;
  std::vector<data::MarketDataset> datasets;
  std::vector<analysis::RatingDistribution> distributions;

  for (const auto& [code, path] : options.markets) {
    inputs.emplace_back(path, hash_file(path));
    auto records = data::load_ratings(path, code);
    distributions.push_back(analysis::rating_distribution(records));
    if (options.apply_kcore) records = data::kcore_filter(records, options.min_count);
    datasets.push_back(data::build_market_dataset(records, code));
    outcome.codes.push_back(code);
  }
  data::align_items(datasets);

  std::vector<analysis::MarketVector> vectors;
  for (const auto& ds : datasets) vectors.push_back(analysis::item_count_vector(ds));
  outcome.similarity = analysis::similarity_matrix(vectors);

  std::vector<std::string> outputs;
  {
    std::ostringstream ss;
    ss << "market";
    for (const std::string& c : outcome.codes) ss << '\t' << c;
    ss << '\n';
    ss << std::setprecision(17);
    for (size_t i = 0; i < outcome.codes.size(); ++i) {
      ss << outcome.codes[i];
      for (size_t j = 0; j < outcome.codes.size(); ++j) ss << '\t' << outcome.similarity[i][j];
      ss << '\n';
    }
    outcome.similarity_path = options.out_dir + "/similarity.tsv";
    write_text(outcome.similarity_path, ss.str());
    outputs.push_back("similarity.tsv");
  }
  {
    std::ostringstream ss;
    ss << "market\tstars1\tstars2\tstars3\tstars4\tstars5\tmean\tmedian\ttotal\n";
    ss << std::setprecision(17);
    for (size_t i = 0; i < outcome.codes.size(); ++i) {
      const analysis::RatingDistribution& d = distributions[i];
      ss << outcome.codes[i];
      for (int s = 0; s < 5; ++s) ss << '\t' << d.star_counts[s];
      ss << '\t' << d.mean << '\t' << d.median << '\t' << d.total << '\n';
    }
    outcome.ratings_path = options.out_dir + "/rating_dist.tsv";
    write_text(outcome.ratings_path, ss.str());
    outputs.push_back("rating_dist.tsv");
  }
  for (size_t i = 0; i < datasets.size(); ++i) {
    std::ostringstream ss;
    ss << "item_id\tcount\n";
    for (long j = 0; j < datasets[i].items->size(); ++j) {
      ss << datasets[i].items->ids[static_cast<size_t>(j)] << '\t' << vectors[i].counts[static_cast<size_t>(j)]
         << '\n';
    }
    const std::string rel = outcome.codes[i] + ".item_counts.tsv";
    write_text(options.out_dir + "/" + rel, ss.str());
    outputs.push_back(rel);
  }

  json config{{"apply_kcore", options.apply_kcore}, {"min_count", options.min_count}};
  json markets_j = json::object();
  for (const auto& [code, path] : options.markets) markets_j[code] = path;
  config["markets"] = markets_j;
  outcome.manifest_path =
      write_manifest(options.out_dir, "analyze", config, inputs, outputs, {});
  return outcome;
}

}  // namespace forec::cli
