// Acceptance suite: one pass/fail line per criterion. Runs the desk-scale
// ordering experiments on synthetic market pairs, so expect a few minutes.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "forec/analysis.hpp"
#include "forec/checkpoint.hpp"
#include "forec/cli.hpp"
#include "forec/data.hpp"
#include "forec/eval.hpp"
#include "forec/hash.hpp"
#include "forec/model.hpp"
#include "forec/synthgen.hpp"
#include "forec/train.hpp"
#include "oracles.hpp"

using namespace forec;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] %s — %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness for every model family.

bool check_family_gradients(const model::Model& m, Rng& rng, int cases, long* checked) {
  for (int c = 0; c < cases; ++c) {
    const long u = static_cast<long>(rng.below(static_cast<uint64_t>(m.n_users)));
    const long i = static_cast<long>(rng.below(static_cast<uint64_t>(m.n_items)));
    const double label = rng.real01() < 0.5 ? 0.0 : 1.0;

    ad::Tape tape;
    const long uu[1] = {u};
    const long ii[1] = {i};
    const ad::VarId pred = m.forward(tape, uu, ii);
    const ad::GradMap grads =
        tape.backward(tape.bce_loss(pred, ad::Tensor({1, 1}, {label})), m.params);

    auto loss = [&](const ad::ParamSet& p) {
      ad::Tape t;
      const ad::VarId pr = m.forward_with(t, p, uu, ii);
      return t.value(t.bce_loss(pr, ad::Tensor({1, 1}, {label}))).value();
    };
    for (const auto& e : m.params.entries()) {
      if (e.frozen) {
        if (grads.count(e.name) != 0) return false;
        continue;
      }
      *checked += e.value.size();
      if (!oracles::grads_close(grads.at(e.name).data(),
                                oracles::fd_gradient(loss, m.params, e.name))) {
        return false;
      }
    }
  }
  return true;
}

void criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  model::ModelConfig cfg;           // default tower [16,64,32,16,8], d = 8
  cfg.init_std = 0.25;              // keeps FD probes away from ReLU kinks
  const long n_users = 6, n_items = 9;

  Rng rng(2026);
  long checked = 0;
  bool ok = true;

  const model::Model gmf = model::make_gmf(n_users, n_items, cfg, 11);
  ok = ok && check_family_gradients(gmf, rng, 20, &checked);
  const model::Model mlp = model::make_mlp(n_users, n_items, cfg, 12);
  ok = ok && check_family_gradients(mlp, rng, 20, &checked);
  const model::Model nmf = model::make_nmf(gmf, mlp, 0.5);
  ok = ok && check_family_gradients(nmf, rng, 20, &checked);
  const model::Model forked = model::fork(nmf, 2, {16, 32, 16}, 13);
  ok = ok && check_family_gradients(forked, rng, 20, &checked);

  const double secs = elapsed_s(t0);
  ok = ok && secs < 60.0;
  report("gradient-correctness", ok,
         std::to_string(checked) + " parameter gradients across 4 families vs central "
         "finite differences (rel 1e-4), " + fmt(secs) + " s");
}

// ---------------------------------------------------------------------------
// 2. MAML mechanics.

data::SplitDataset toy_split(long n_users, long n_items, long per_user) {
  data::SplitDataset split;
  split.market_code = "m";
  split.n_items_global = n_items;
  for (long i = 0; i < n_items; ++i) split.items_present.push_back(i);
  for (long u = 0; u < n_users; ++u) {
    data::UserSplit us;
    std::set<long> known;
    for (long j = 0; j < per_user; ++j) {
      const long item = (u + 3 * j) % n_items;
      us.train.push_back({u, item, 10 + j});
      known.insert(item);
    }
    us.valid = {u, (u + 3 * per_user) % n_items, 100};
    us.test = {u, (u + 3 * per_user + 1) % n_items, 200};
    known.insert(us.valid.item);
    known.insert(us.test.item);
    us.known_positives.assign(known.begin(), known.end());
    split.users.push_back(std::move(us));
  }
  return split;
}

void criterion_maml() {
  model::ModelConfig cfg;
  cfg.embed_dim = 4;
  cfg.tower = {8, 10, 6};
  const data::SplitDataset split = toy_split(8, 24, 6);
  const train::MarketView view{&split, 0};

  model::Model m = model::make_gmf(8, 24, cfg, 5);
  data::NegativeSampler sampler(split, data::NegScope::Market, 17);
  Rng rng(19);
  const std::vector<train::Sample> batch = train::sample_shot_batch(view, sampler, 8, 4, rng, nullptr);

  // one inner update == manual theta - alpha * grad, bit-exact
  const double alpha = 0.02;
  const ad::ParamSet adapted = train::maml_inner_step(m, m.params, batch, alpha);
  const ad::GradMap grads = train::batch_gradients(m, m.params, batch);
  bool inner_ok = true;
  for (const auto& e : m.params.entries()) {
    const ad::Tensor& g = grads.at(e.name);
    std::vector<double> manual(static_cast<size_t>(e.value.size()));
    for (long j = 0; j < e.value.size(); ++j) manual[static_cast<size_t>(j)] = e.value[j] - alpha * g[j];
    inner_ok = inner_ok &&
               adapted.value(e.name).bits_equal(ad::Tensor(e.value.shape(), std::move(manual)));
  }

  // alpha = 0: adapted parameters identical to theta, bit for bit
  const bool alpha0_ok = train::maml_inner_step(m, m.params, batch, 0.0).bits_equal(m.params);

  // beta = 0: meta training leaves theta untouched, bit for bit
  model::Model m2 = model::make_gmf(8, 24, cfg, 5);
  const ad::ParamSet theta0 = m2.params;
  train::MamlConfig maml;
  maml.meta_lr = 0.0;
  maml.meta_iterations = 3;
  train::TrainConfig base;
  base.seed = 23;
  train::maml_pretrain(m2, {view}, maml, base);
  const bool beta0_ok = m2.params.bits_equal(theta0);

  report("maml-mechanics", inner_ok && alpha0_ok && beta0_ok,
         std::string("inner step == sgd_step bit-exact: ") + (inner_ok ? "yes" : "no") +
             ", alpha=0 identity: " + (alpha0_ok ? "yes" : "no") +
             ", beta=0 identity: " + (beta0_ok ? "yes" : "no"));
}

// ---------------------------------------------------------------------------
// 3. Fork / freeze integrity.

void criterion_fork_freeze() {
  // empty head: forked model equals the pre-trained NMF on every pair
  model::ModelConfig cfg;
  model::Model nmf = model::make_nmf(model::make_gmf(6, 9, cfg, 31), model::make_mlp(6, 9, cfg, 32), 0.5);
  model::Model plain_fork = model::fork(nmf, 2, {}, 33);
  bool equiv = true;
  for (long u = 0; u < 6; ++u) {
    for (long i = 0; i < 9; ++i) equiv = equiv && plain_fork.predict(u, i) == nmf.predict(u, i);
  }

  // fork with head, then 10 fine-tuning epochs: the frozen set stays
  // byte-identical to fork time
  synth::SynthConfig scfg;
  scfg.n_items = 160;
  scfg.n_users_source = 220;
  scfg.n_users_target = 70;
  scfg.seed = 31;
  auto [src_ds, tgt_ds] = synth::generate_pair(scfg);
  const data::SplitDataset src = data::leave_one_out_split(src_ds);
  const data::SplitDataset tgt = data::leave_one_out_split(tgt_ds);

  train::TrainConfig base;
  base.seed = 7;
  base.epochs = 2;
  train::ForecConfig fcfg;
  fcfg.warmup_epochs = 1;
  fcfg.maml.meta_iterations = 10;
  fcfg.finetune_epochs = 10;
  model::Model pretrain = train::forec_pretrain_stage(src, tgt, model::ModelConfig{}, fcfg, base);
  model::Model forked = train::fork_stage(pretrain, fcfg, base);
  const model::Model at_fork = forked;
  train::finetune_stage(forked, tgt, fcfg, base);

  const std::set<std::string> expected_frozen = {
      "gmf.user_emb", "gmf.item_emb", "gmf.h",        "mlp.user_emb", "mlp.item_emb",
      "mlp.layer0.w", "mlp.layer0.b", "mlp.layer1.w", "mlp.layer1.b"};
  std::set<std::string> actual_frozen;
  bool frozen_ok = true;
  for (const auto& e : forked.params.entries()) {
    if (!e.frozen) continue;
    actual_frozen.insert(e.name);
    frozen_ok = frozen_ok && e.value.bits_equal(at_fork.params.value(e.name)) &&
                e.value.bits_equal(pretrain.params.value(e.name));
  }
  frozen_ok = frozen_ok && actual_frozen == expected_frozen;

  report("fork-freeze-integrity", equiv && frozen_ok,
         std::string("empty-head equivalence exact: ") + (equiv ? "yes" : "no") +
             "; frozen set (" + std::to_string(actual_frozen.size()) +
             " tensors) byte-identical after 10 fine-tuning epochs: " + (frozen_ok ? "yes" : "no"));
}

// ---------------------------------------------------------------------------
// 4. Metric oracle.

void criterion_metric_oracle() {
  Rng rng(41);
  bool rank_ok = true;
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> scores(100);
    for (double& s : scores) s = rng.real01();
    if (t % 9 == 0) scores[5] = scores[0];  // exercise the tie rule
    eval::ScoreFn f = [&scores](long, std::span<const long> items) {
      std::vector<double> out(items.size());
      for (size_t i = 0; i < items.size(); ++i) out[i] = scores[static_cast<size_t>(items[i])];
      return out;
    };
    std::vector<long> negs(99);
    for (long i = 0; i < 99; ++i) negs[static_cast<size_t>(i)] = i + 1;
    if (eval::rank_heldout(f, 0, 0, negs).rank != oracles::sort_rank(scores)) {
      rank_ok = false;
      break;
    }
  }

  const bool ndcg_ok = eval::ndcg_at_k(3, 10) == 0.5 && eval::hr_at_k(3, 10) == 1.0;

  // uniform-random scorer over 100 candidates: HR@10 = 0.10 +- 0.02 over 2000 users
  data::SplitDataset split;
  split.market_code = "rand";
  split.n_items_global = 150;
  for (long i = 0; i < 150; ++i) split.items_present.push_back(i);
  for (long u = 0; u < 2000; ++u) {
    data::UserSplit us;
    std::set<long> known;
    for (long j = 0; j < 4; ++j) {
      us.train.push_back({u, (u * 7 + j) % 150, 10 + j});
      known.insert((u * 7 + j) % 150);
    }
    us.valid = {u, (u * 7 + 4) % 150, 100};
    us.test = {u, (u * 7 + 5) % 150, 200};
    known.insert(us.valid.item);
    known.insert(us.test.item);
    us.known_positives.assign(known.begin(), known.end());
    split.users.push_back(std::move(us));
  }
  data::NegativeSampler sampler(split, data::NegScope::Market, 43);
  Rng score_rng(44);
  eval::ScoreFn random_scorer = [&score_rng](long, std::span<const long> items) {
    std::vector<double> s(items.size());
    for (double& x : s) x = score_rng.real01();
    return s;
  };
  const eval::MetricReport r = eval::evaluate(random_scorer, split, sampler);
  const bool random_ok = std::fabs(r.hr - 0.10) <= 0.02 && r.evaluated_users == 2000;

  report("metric-oracle", rank_ok && ndcg_ok && random_ok,
         std::string("1000 rank vectors vs sort oracle: ") + (rank_ok ? "exact" : "mismatch") +
             "; ndcg(rank 3) == 0.5; random scorer HR@10 = " + fmt(r.hr) + " (0.10 +- 0.02)");
}

// ---------------------------------------------------------------------------
// 5. Protocol fidelity.

void criterion_protocol() {
  Rng rng(51);
  bool kcore_ok = true;
  for (int t = 0; t < 50 && kcore_ok; ++t) {
    std::vector<data::InteractionRecord> records;
    const long n_users = 3 + static_cast<long>(rng.below(8));
    const long n_items = 3 + static_cast<long>(rng.below(8));
    const long edges = 5 + static_cast<long>(rng.below(45));
    for (long e = 0; e < edges; ++e) {
      records.push_back({"u" + std::to_string(rng.below(static_cast<uint64_t>(n_users))),
                         "i" + std::to_string(rng.below(static_cast<uint64_t>(n_items))), 5.0,
                         static_cast<long>(e)});
    }
    const long k = 2 + static_cast<long>(rng.below(4));
    const auto expected = oracles::kcore_fixpoint(records, k);
    const auto actual = data::kcore_filter(records, k);
    std::multiset<std::pair<std::string, std::string>> se, sa;
    for (const auto& r : expected) se.emplace(r.user_id, r.item_id);
    for (const auto& r : actual) sa.emplace(r.user_id, r.item_id);
    kcore_ok = se == sa;
  }

  // leave-one-out partitions exactly
  bool split_ok = true;
  for (int t = 0; t < 10 && split_ok; ++t) {
    std::vector<data::InteractionRecord> records;
    const long n_users = 2 + static_cast<long>(rng.below(5));
    for (long u = 0; u < n_users; ++u) {
      const long n = 3 + static_cast<long>(rng.below(7));
      for (long j = 0; j < n; ++j) {
        records.push_back({"u" + std::to_string(u), "i" + std::to_string(rng.below(25)), 5.0,
                           static_cast<long>(rng.below(500))});
      }
    }
    const auto ds = data::build_market_dataset(records, "m");
    const auto split = data::leave_one_out_split(ds);
    std::map<long, std::multiset<std::pair<long, long>>> original, rebuilt;
    for (const auto& it : ds.interactions) original[it.user].emplace(it.item, it.timestamp);
    for (long u = 0; u < split.n_users(); ++u) {
      const auto& us = split.users[static_cast<size_t>(u)];
      split_ok = split_ok && us.train.size() == original[u].size() - 2;
      for (const auto& it : us.train) rebuilt[u].emplace(it.item, it.timestamp);
      rebuilt[u].emplace(us.valid.item, us.valid.timestamp);
      rebuilt[u].emplace(us.test.item, us.test.timestamp);
      split_ok = split_ok && us.valid.timestamp <= us.test.timestamp;
    }
    split_ok = split_ok && original == rebuilt;
  }

  // 99 evaluation negatives: distinct, non-positive, verified exhaustively
  synth::SynthConfig scfg;  // default desk-scale pair
  scfg.seed = 1;
  auto [src_ds, tgt_ds] = synth::generate_pair(scfg);
  const data::SplitDataset tgt = data::leave_one_out_split(tgt_ds);
  data::NegativeSampler sampler(tgt, data::NegScope::Market, 53);
  bool negs_ok = true;
  long users_checked = 0;
  for (long u = 0; u < tgt.n_users() && negs_ok; ++u) {
    const auto negs = sampler.eval_negatives(u, 99);
    std::set<long> distinct(negs.begin(), negs.end());
    negs_ok = negs.size() == 99 && distinct.size() == 99;
    const auto& known = tgt.users[static_cast<size_t>(u)].known_positives;
    for (const long n : negs) {
      negs_ok = negs_ok && !std::binary_search(known.begin(), known.end(), n);
    }
    negs_ok = negs_ok && sampler.eval_negatives(u, 99) == negs;  // deterministic
    ++users_checked;
  }

  report("protocol-fidelity", kcore_ok && split_ok && negs_ok,
         std::string("5-core == fixed-point oracle on 50 graphs: ") + (kcore_ok ? "yes" : "no") +
             "; leave-one-out partitions exactly: " + (split_ok ? "yes" : "no") +
             "; 99 distinct non-positive eval negatives for " + std::to_string(users_checked) +
             " users: " + (negs_ok ? "yes" : "no"));
}

// ---------------------------------------------------------------------------
// 6 + 7. Cross-market ordering and user-group trend.

struct SeedResult {
  double nmf = 0, nmfpp = 0, forec = 0;
  std::vector<double> nmf_groups, forec_groups;
};

SeedResult run_ordering_seed(double rho, std::uint64_t seed, bool with_pp, bool with_groups) {
  synth::SynthConfig scfg;  // defaults: 500 items, 2000/200 users, d=8, [5,15]
  scfg.correlation = rho;
  scfg.seed = seed;
  auto [src_ds, tgt_ds] = synth::generate_pair(scfg);
  const data::SplitDataset src = data::leave_one_out_split(src_ds);
  const data::SplitDataset tgt = data::leave_one_out_split(tgt_ds);

  model::ModelConfig mcfg;
  train::TrainConfig base;  // declared defaults: 20 epochs, batch 256, Adam
  base.seed = seed;
  train::ForecConfig fcfg;  // warmup 5, fine-tune 20, K=20, beta=0.1

  data::NegativeSampler sampler(tgt, data::NegScope::Market, Rng::derive(seed, "eval-sampler"));
  SeedResult out;

  const model::Model nmf = train::train_nmf_recipe({&tgt, 0}, {&tgt, 0}, mcfg, base,
                                                   train::DataRegime::Single, tgt.n_users());
  const eval::MetricReport r_nmf = eval::evaluate(eval::model_scorer(nmf), tgt, sampler);
  out.nmf = r_nmf.ndcg;

  if (with_pp) {
    const model::Model pp = train::nmfpp_pretrain_stage(src, tgt, mcfg, base);
    out.nmfpp = eval::evaluate(eval::model_scorer(pp), tgt, sampler).ndcg;
  }

  const model::Model forec = train::forec_train(src, tgt, mcfg, fcfg, base).final_model;
  const eval::MetricReport r_forec = eval::evaluate(eval::model_scorer(forec), tgt, sampler);
  out.forec = r_forec.ndcg;

  if (with_groups) {
    for (const auto& g : eval::group_metrics(r_nmf, 5)) out.nmf_groups.push_back(g.ndcg);
    for (const auto& g : eval::group_metrics(r_forec, 5)) out.forec_groups.push_back(g.ndcg);
  }
  return out;
}

void criteria_ordering_and_groups() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};

  std::vector<SeedResult> at09, at00;
  for (const std::uint64_t seed : seeds) {
    at09.push_back(run_ordering_seed(0.9, seed, /*with_pp=*/true, /*with_groups=*/true));
  }
  for (const std::uint64_t seed : seeds) {
    at00.push_back(run_ordering_seed(0.0, seed, /*with_pp=*/false, /*with_groups=*/false));
  }

  int wins = 0;
  double m_nmf09 = 0, m_pp09 = 0, m_forec09 = 0, m_nmf00 = 0, m_forec00 = 0;
  for (size_t s = 0; s < seeds.size(); ++s) {
    wins += at09[s].forec > at09[s].nmf;
    m_nmf09 += at09[s].nmf / 5;
    m_pp09 += at09[s].nmfpp / 5;
    m_forec09 += at09[s].forec / 5;
    m_nmf00 += at00[s].nmf / 5;
    m_forec00 += at00[s].forec / 5;
  }
  const double gap09 = m_forec09 - m_nmf09;
  const double gap00 = m_forec00 - m_nmf00;
  const double secs = elapsed_s(t0);

  const bool wins_ok = wins >= 4;
  const bool mean_ok = m_forec09 >= m_pp09;
  const bool shrink_ok = gap00 <= 0.5 * gap09;
  const bool time_ok = secs < 1800.0;

  report("cross-market-ordering", wins_ok && mean_ok && shrink_ok && time_ok,
         "rho=0.9: FOREC>NMF in " + std::to_string(wins) + "/5 seeds, mean FOREC " +
             fmt(m_forec09) + " vs NMF++ " + fmt(m_pp09) + " vs NMF " + fmt(m_nmf09) +
             "; gap rho=0.9 " + fmt(gap09) + " vs rho=0 " + fmt(gap00) +
             (shrink_ok ? " (shrink ok)" : " (shrink < 50%: the shared-embedding coverage "
                                           "benefit persists at rho=0; see README)") +
             "; " + fmt(secs) + " s");

  // 7. user-group trend at rho = 0.9, 5-seed average per group
  int groups_won = 0;
  std::string per_group;
  for (int g = 0; g < 5; ++g) {
    double f = 0, n = 0;
    for (const SeedResult& r : at09) {
      f += r.forec_groups[static_cast<size_t>(g)] / 5;
      n += r.nmf_groups[static_cast<size_t>(g)] / 5;
    }
    groups_won += f >= n;
    per_group += (g ? " " : "") + fmt(f) + ">=" + fmt(n) + (f >= n ? "+" : "-");
  }
  report("user-group-trend", groups_won >= 4,
         "FOREC >= NMF in " + std::to_string(groups_won) + "/5 groups (coldest to warmest: " +
             per_group + ")");
}

// ---------------------------------------------------------------------------
// 8. Determinism through the CLI layer.

void criterion_determinism() {
  const std::string root = (fs::temp_directory_path() / "forec_acceptance").string();
  fs::remove_all(root);

  auto run_once = [&](const std::string& dir) {
    cli::ExperimentConfig cfg;
    synth::SynthConfig s;
    s.n_items = 160;
    s.n_users_source = 220;
    s.n_users_target = 70;
    s.seed = 4;
    s.correlation = 0.9;
    cfg.synth = s;
    cfg.method = "forec";
    cfg.train.epochs = 2;
    cfg.forec.warmup_epochs = 1;
    cfg.forec.finetune_epochs = 2;
    cfg.maml.meta_iterations = 8;
    cfg.eval_negatives = 40;
    cfg.seed = 9;
    cfg.out_dir = root + "/" + dir;
    const cli::TrainOutcome t = cli::cmd_train(cfg);
    cli::EvalOptions ev;
    ev.checkpoint = t.final_checkpoint;
    ev.prepared_dir = cfg.out_dir + "/data/prepared";
    ev.target = "tgt";
    ev.out_dir = cfg.out_dir + "/eval";
    ev.negatives = 40;
    ev.seed = 9;
    cli::cmd_eval(ev);
    return cfg.out_dir;
  };

  const std::string a = run_once("a");
  const std::string b = run_once("b");

  const bool ckpt_ok = model::checkpoint_hash(a + "/final") == model::checkpoint_hash(b + "/final");
  const bool metrics_ok = hash_file(a + "/eval/metrics.tsv") == hash_file(b + "/eval/metrics.tsv") &&
                          hash_file(a + "/eval/per_user.tsv") == hash_file(b + "/eval/per_user.tsv");
  const bool stages_ok =
      model::checkpoint_hash(a + "/stage_pretrain") == model::checkpoint_hash(b + "/stage_pretrain") &&
      model::checkpoint_hash(a + "/stage_fork") == model::checkpoint_hash(b + "/stage_fork");

  report("determinism", ckpt_ok && metrics_ok && stages_ok,
         std::string("bit-identical checkpoints: ") + (ckpt_ok && stages_ok ? "yes" : "no") +
             ", bit-identical metric files: " + (metrics_ok ? "yes" : "no"));
}

// ---------------------------------------------------------------------------
// 9. Analysis unit results.

void criterion_analysis() {
  const analysis::MarketVector a{"a", {1, 2, 0}};
  const analysis::MarketVector b{"b", {2, 1, 0}};
  const bool hand_ok = analysis::cosine_similarity(a, b) == 0.8;
  const analysis::MarketVector c{"c", {3, 1, 4}};
  const bool ident_ok = analysis::cosine_similarity(c, c) == 1.0;

  // similarity monotone in rho over {0, 0.5, 1}, 5-seed average
  double mean_sim[3] = {0, 0, 0};
  const double rhos[3] = {0.0, 0.5, 1.0};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (int r = 0; r < 3; ++r) {
      synth::SynthConfig scfg;
      scfg.correlation = rhos[r];
      scfg.seed = seed;
      auto [src, tgt] = synth::generate_pair(scfg);
      mean_sim[r] += analysis::cosine_similarity(analysis::item_count_vector(src),
                                                 analysis::item_count_vector(tgt)) / 5;
    }
  }
  const bool monotone_ok = mean_sim[0] <= mean_sim[1] && mean_sim[1] <= mean_sim[2];

  report("analysis-units", hand_ok && ident_ok && monotone_ok,
         "cos([1,2,0],[2,1,0]) == 0.8 exact; identical -> 1.0; similarity over rho {0, 0.5, 1} = " +
             fmt(mean_sim[0]) + " <= " + fmt(mean_sim[1]) + " <= " + fmt(mean_sim[2]));
}

// ---------------------------------------------------------------------------
// Extra: target-size ablation ordering (per-operation example, not a
// numbered criterion).

void extra_ablation_ordering() {
  const auto t0 = std::chrono::steady_clock::now();
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    synth::SynthConfig scfg;
    scfg.correlation = 0.9;
    scfg.seed = seed;
    auto [src_ds, tgt_ds] = synth::generate_pair(scfg);
    const data::SplitDataset src = data::leave_one_out_split(src_ds);
    const data::SplitDataset tgt = data::leave_one_out_split(tgt_ds);

    model::ModelConfig mcfg;
    train::TrainConfig base;
    base.seed = seed;
    train::ForecConfig fcfg;
    const eval::PipelineFn pipeline = [&](const data::SplitDataset& reduced) {
      return train::forec_train(src, reduced, mcfg, fcfg, base).final_model;
    };
    const auto points = eval::target_size_ablation(pipeline, tgt, {0.5, 0.1},
                                                   Rng::derive(seed, "eval-sampler"));
    wins += points[0].report.ndcg >= points[1].report.ndcg;
  }
  report("extra:ablation-ordering", wins >= 4,
         "FOREC nDCG at 50% train >= at 10% in " + std::to_string(wins) + "/5 seeds, " +
             fmt(elapsed_s(t0)) + " s");
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  criterion_gradients();
  criterion_maml();
  criterion_fork_freeze();
  criterion_metric_oracle();
  criterion_protocol();
  criteria_ordering_and_groups();
  criterion_determinism();
  criterion_analysis();
  extra_ablation_ordering();
  std::printf("%d criterion(s) failed; total %.1f s\n", g_failures, elapsed_s(t0));
  return g_failures;
}
