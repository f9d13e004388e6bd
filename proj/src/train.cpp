#include "forec/train.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <stdexcept>

namespace forec::train {

namespace {

data::NegScope resolve_scope(TrainConfig::Scope s, bool cross_market) {
  switch (s) {
    case TrainConfig::Scope::Market: return data::NegScope::Market;
    case TrainConfig::Scope::Global: return data::NegScope::Global;
    case TrainConfig::Scope::Auto:
      return cross_market ? data::NegScope::Global : data::NegScope::Market;
  }
  throw std::logic_error("bad scope");
}

void fisher_yates(std::vector<Sample>& v, Rng& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[static_cast<size_t>(rng.below(i))]);
  }
}

// All positives of one market for one epoch, each with fresh negatives.
void add_market_epoch(std::vector<Sample>& out, const MarketView& view,
                      data::NegativeSampler& sampler, long negatives) {
  const data::SplitDataset& split = *view.split;
  for (long u = 0; u < split.n_users(); ++u) {
    for (const data::Interaction& it : split.users[static_cast<size_t>(u)].train) {
      out.push_back({view.user_offset + u, it.item, 1.0});
      for (const long neg : sampler.train_negatives(u, negatives)) {
        out.push_back({view.user_offset + u, neg, 0.0});
      }
    }
  }
}

// Maps a flat interaction rank onto (user, index-within-user-train).
struct TrainIndex {
  std::vector<long> prefix;
  long total = 0;

  explicit TrainIndex(const data::SplitDataset& split) {
    prefix.reserve(static_cast<size_t>(split.n_users()) + 1);
    prefix.push_back(0);
    for (const data::UserSplit& us : split.users) {
      prefix.push_back(prefix.back() + static_cast<long>(us.train.size()));
    }
    total = prefix.back();
  }

  std::pair<long, long> locate(long r) const {
    const auto it = std::upper_bound(prefix.begin(), prefix.end(), r);
    const long user = static_cast<long>(it - prefix.begin()) - 1;
    return {user, r - prefix[static_cast<size_t>(user)]};
  }
};

std::vector<Sample> shot_batch_impl(const MarketView& view, const TrainIndex& index,
                                    data::NegativeSampler& sampler, long shots,
                                    long negatives, Rng& rng,
                                    std::vector<std::string>* warnings) {
  const data::SplitDataset& split = *view.split;
  std::vector<long> picks;
  picks.reserve(static_cast<size_t>(shots));
  if (index.total >= shots) {
    std::set<long> seen;
    while (static_cast<long>(picks.size()) < shots) {
      const long r = static_cast<long>(rng.below(static_cast<std::uint64_t>(index.total)));
      if (seen.insert(r).second) picks.push_back(r);
    }
  } else {
    if (warnings) {
      warnings->push_back("market " + split.market_code + " has " +
                          std::to_string(index.total) + " train interactions < " +
                          std::to_string(shots) + " shots; sampling with replacement");
    }
    for (long k = 0; k < shots; ++k) {
      picks.push_back(static_cast<long>(rng.below(static_cast<std::uint64_t>(index.total))));
    }
  }
  std::vector<Sample> batch;
  batch.reserve(static_cast<size_t>(shots * (1 + negatives)));
  for (const long r : picks) {
    const auto [user, k] = index.locate(r);
    const data::Interaction& it = split.users[static_cast<size_t>(user)].train[static_cast<size_t>(k)];
    batch.push_back({view.user_offset + user, it.item, 1.0});
    for (const long neg : sampler.train_negatives(user, negatives)) {
      batch.push_back({view.user_offset + user, neg, 0.0});
    }
  }
  return batch;
}

using EpochBuilder = std::function<std::vector<Sample>(long epoch, TrainResult& result)>;

TrainResult run_training(model::Model& m, const TrainConfig& cfg, double lr,
                         const std::string& stage, const EpochBuilder& build_epoch) {
  if (cfg.epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
  if (lr <= 0.0) throw std::invalid_argument("train: learning rate must be positive");
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");

  TrainResult result;
  Rng shuffle_rng(Rng::derive(cfg.seed, stage + "/shuffle"));
  ad::AdamOptimizer adam(lr, cfg.l2);

  for (long epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<Sample> samples = build_epoch(epoch, result);
    fisher_yates(samples, shuffle_rng);

    double loss_sum = 0.0;
    long batches = 0;
    for (size_t start = 0; start < samples.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(samples.size(), start + static_cast<size_t>(cfg.batch_size));
      const std::span<const Sample> batch(samples.data() + start, end - start);
      try {
        double loss = 0.0;
        const ad::GradMap grads = batch_gradients(m, m.params, batch, &loss);
        if (cfg.optimizer == TrainConfig::Optimizer::Adam) {
          adam.step(m.params, grads);
        } else {
          ad::sgd_step(m.params, grads, lr, cfg.l2);
        }
        loss_sum += loss;
        ++batches;
      } catch (const std::exception& e) {
        throw std::runtime_error(stage + ": epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(batches) + ": " + e.what());
      }
    }
    result.loss_history.push_back(batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0);
  }
  return result;
}

}  // namespace

ad::GradMap batch_gradients(const model::Model& m, const ad::ParamSet& theta,
                            std::span<const Sample> batch, double* loss_out) {
  if (batch.empty()) throw std::invalid_argument("batch_gradients: empty batch");
  std::vector<long> users, items;
  std::vector<double> labels;
  users.reserve(batch.size());
  items.reserve(batch.size());
  labels.reserve(batch.size());
  for (const Sample& s : batch) {
    users.push_back(s.user);
    items.push_back(s.item);
    labels.push_back(s.label);
  }
  ad::Tape tape;
  const ad::VarId pred = m.forward_with(tape, theta, users, items);
  const ad::VarId loss =
      tape.bce_loss(pred, ad::Tensor({static_cast<long>(batch.size()), 1}, std::move(labels)));
  if (loss_out) *loss_out = tape.value(loss).value();
  return tape.backward(loss, theta);
}

TrainResult train_single(model::Model& m, const data::SplitDataset& market,
                         const TrainConfig& cfg, long user_offset) {
  const MarketView view{&market, user_offset};
  data::NegativeSampler sampler(market, resolve_scope(cfg.neg_scope, false),
                                Rng::derive(cfg.seed, "neg/" + market.market_code));
  return run_training(m, cfg, cfg.lr, "single/" + market.market_code,
                      [&](long, TrainResult&) {
                        std::vector<Sample> s;
                        add_market_epoch(s, view, sampler, cfg.train_negatives);
                        return s;
                      });
}

TrainResult train_concat_equal(model::Model& m, const MarketView& source,
                               const MarketView& target, const TrainConfig& cfg) {
  const data::SplitDataset& src = *source.split;
  const data::SplitDataset& tgt = *target.split;
  const data::NegScope scope = resolve_scope(cfg.neg_scope, true);
  data::NegativeSampler src_sampler(src, scope, Rng::derive(cfg.seed, "neg/" + src.market_code));
  data::NegativeSampler tgt_sampler(tgt, scope, Rng::derive(cfg.seed, "neg/" + tgt.market_code));
  const TrainIndex src_index(src);
  const long n_tgt = tgt.train_size();
  Rng pick_rng(Rng::derive(cfg.seed, "equal-pick"));
  bool warned = false;

  auto count_positives = [](const std::vector<Sample>& s) {
    long n = 0;
    for (const Sample& x : s) {
      if (x.label == 1.0) ++n;
    }
    return n;
  };

  return run_training(m, cfg, cfg.lr, "concat-equal/" + tgt.market_code,
                      [&](long, TrainResult& result) {
                        std::vector<Sample> s;
                        add_market_epoch(s, target, tgt_sampler, cfg.train_negatives);
                        const long tgt_pos = count_positives(s);

                        std::vector<long> picks;
                        picks.reserve(static_cast<size_t>(n_tgt));
                        if (src_index.total >= n_tgt) {
                          // Without replacement: partial Fisher-Yates over ranks.
                          std::vector<long> ranks(static_cast<size_t>(src_index.total));
                          for (long i = 0; i < src_index.total; ++i) ranks[static_cast<size_t>(i)] = i;
                          for (long i = 0; i < n_tgt; ++i) {
                            const long j =
                                i + static_cast<long>(pick_rng.below(static_cast<std::uint64_t>(src_index.total - i)));
                            std::swap(ranks[static_cast<size_t>(i)], ranks[static_cast<size_t>(j)]);
                            picks.push_back(ranks[static_cast<size_t>(i)]);
                          }
                        } else {
                          if (!warned) {
                            result.warnings.push_back("source market smaller than target; sampling with replacement");
                            warned = true;
                          }
                          for (long i = 0; i < n_tgt; ++i) {
                            picks.push_back(static_cast<long>(pick_rng.below(static_cast<std::uint64_t>(src_index.total))));
                          }
                        }
                        for (const long r : picks) {
                          const auto [user, k] = src_index.locate(r);
                          const data::Interaction& it =
                              src.users[static_cast<size_t>(user)].train[static_cast<size_t>(k)];
                          s.push_back({source.user_offset + user, it.item, 1.0});
                          for (const long neg : src_sampler.train_negatives(user, cfg.train_negatives)) {
                            s.push_back({source.user_offset + user, neg, 0.0});
                          }
                        }
                        result.epoch_mix.push_back({count_positives(s) - tgt_pos, tgt_pos});
                        return s;
                      });
}

TrainResult train_joint_concat(model::Model& m, const MarketView& source,
                               const MarketView& target, const TrainConfig& cfg) {
  const data::NegScope scope = resolve_scope(cfg.neg_scope, true);
  data::NegativeSampler src_sampler(*source.split, scope,
                                    Rng::derive(cfg.seed, "neg/" + source.split->market_code));
  data::NegativeSampler tgt_sampler(*target.split, scope,
                                    Rng::derive(cfg.seed, "neg/" + target.split->market_code));
  return run_training(m, cfg, cfg.lr, "joint-concat/" + target.split->market_code,
                      [&](long, TrainResult&) {
                        std::vector<Sample> s;
                        add_market_epoch(s, source, src_sampler, cfg.train_negatives);
                        add_market_epoch(s, target, tgt_sampler, cfg.train_negatives);
                        return s;
                      });
}

ad::ParamSet maml_inner_step(const model::Model& m, const ad::ParamSet& theta,
                             std::span<const Sample> batch, double alpha) {
  const ad::GradMap grads = batch_gradients(m, theta, batch);
  ad::ParamSet adapted = theta;
  ad::sgd_step(adapted, grads, alpha, 0.0);
  return adapted;
}

std::vector<Sample> sample_shot_batch(const MarketView& view, data::NegativeSampler& sampler,
                                      long shots, long negatives, Rng& rng,
                                      std::vector<std::string>* warnings) {
  const TrainIndex index(*view.split);
  return shot_batch_impl(view, index, sampler, shots, negatives, rng, warnings);
}

MamlResult maml_pretrain(model::Model& m, const std::vector<MarketView>& markets,
                         const MamlConfig& maml, const TrainConfig& base) {
  if (markets.empty()) throw std::invalid_argument("maml_pretrain: no markets");
  if (maml.shots < 1) throw std::invalid_argument("maml_pretrain: shots must be >= 1");

  MamlResult result;
  const data::NegScope scope = resolve_scope(base.neg_scope, markets.size() > 1);
  std::vector<data::NegativeSampler> samplers;
  std::vector<TrainIndex> indexes;
  samplers.reserve(markets.size());
  indexes.reserve(markets.size());
  long max_total = 0;
  for (const MarketView& view : markets) {
    samplers.emplace_back(*view.split, scope,
                          Rng::derive(base.seed, "maml-neg/" + view.split->market_code));
    indexes.emplace_back(*view.split);
    max_total = std::max(max_total, indexes.back().total);
  }

  long iterations = maml.meta_iterations;
  if (iterations <= 0) {
    const long per_epoch = (max_total + 2 * maml.shots - 1) / (2 * maml.shots);
    iterations = base.epochs * std::max(1L, per_epoch);
  }

  Rng rng(Rng::derive(base.seed, "maml-shots"));

  for (long iter = 0; iter < iterations; ++iter) {
    std::vector<ad::ParamSet> adapted;
    std::vector<std::vector<Sample>> adapt_batches, eval_batches;
    adapted.reserve(markets.size());
    for (size_t i = 0; i < markets.size(); ++i) {
      adapt_batches.push_back(shot_batch_impl(markets[i], indexes[i], samplers[i], maml.shots,
                                              base.train_negatives, rng, &result.warnings));
      adapted.push_back(maml_inner_step(m, m.params, adapt_batches.back(), maml.inner_lr));
      eval_batches.push_back(shot_batch_impl(markets[i], indexes[i], samplers[i], maml.shots,
                                             base.train_negatives, rng, &result.warnings));
    }

    ad::GradMap meta;
    double loss_sum = 0.0;
    for (size_t i = 0; i < markets.size(); ++i) {
      double li = 0.0;
      ad::GradMap gi = batch_gradients(m, adapted[i], eval_batches[i], &li);
      loss_sum += li;
      if (maml.second_order) {
        // Full meta-gradient (I - alpha H(theta)) g' with the Hessian-vector
        // product taken by central differences of the adapt-batch gradient.
        ad::ParamSet plus = m.params;
        ad::ParamSet minus = m.params;
        for (const auto& [name, g] : gi) {
          const ad::Tensor& t = m.params.value(name);
          std::vector<double> vp(static_cast<size_t>(t.size())), vm(static_cast<size_t>(t.size()));
          for (long j = 0; j < t.size(); ++j) {
            vp[static_cast<size_t>(j)] = t[j] + maml.hvp_step * g[j];
            vm[static_cast<size_t>(j)] = t[j] - maml.hvp_step * g[j];
          }
          plus.set_value(name, ad::Tensor(t.shape(), std::move(vp)));
          minus.set_value(name, ad::Tensor(t.shape(), std::move(vm)));
        }
        const ad::GradMap gp = batch_gradients(m, plus, adapt_batches[i]);
        const ad::GradMap gm = batch_gradients(m, minus, adapt_batches[i]);
        for (auto& [name, g] : gi) {
          const ad::Tensor& p = gp.at(name);
          const ad::Tensor& q = gm.at(name);
          std::vector<double> v(static_cast<size_t>(g.size()));
          for (long j = 0; j < g.size(); ++j) {
            const double hv = (p[j] - q[j]) / (2.0 * maml.hvp_step);
            v[static_cast<size_t>(j)] = g[j] - maml.inner_lr * hv;
          }
          g = ad::Tensor(g.shape(), std::move(v));
        }
      }
      for (const auto& [name, g] : gi) {
        auto it = meta.find(name);
        if (it == meta.end()) {
          meta.emplace(name, g);
        } else {
          std::vector<double> v(static_cast<size_t>(g.size()));
          for (long j = 0; j < g.size(); ++j) v[static_cast<size_t>(j)] = it->second[j] + g[j];
          it->second = ad::Tensor(g.shape(), std::move(v));
        }
      }
    }
    // Meta step from the original parameters: theta <- theta - beta * sum_i g_i.
    ad::sgd_step(m.params, meta, maml.meta_lr, 0.0);
    result.meta_loss_history.push_back(loss_sum);
  }
  return result;
}

void maml_fast_adapt(model::Model& m, const MarketView& target, long shots, double alpha,
                     const TrainConfig& base) {
  const std::vector<Sample> batch = maml_fast_adapt_batch(target, shots, base);
  m.params = maml_inner_step(m, m.params, batch, alpha);
}

// The K-shot adaptation batch: validation interactions of distinct users
// (with replacement only if the market has fewer users than shots).
std::vector<Sample> maml_fast_adapt_batch(const MarketView& target, long shots,
                                          const TrainConfig& base) {
  const data::SplitDataset& split = *target.split;
  if (split.n_users() == 0) throw std::invalid_argument("maml_fast_adapt: empty market");
  Rng rng(Rng::derive(base.seed, "fast-adapt"));
  data::NegativeSampler sampler(split, resolve_scope(base.neg_scope, true),
                                Rng::derive(base.seed, "fast-adapt-neg"));
  std::vector<long> users;
  if (split.n_users() >= shots) {
    std::set<long> seen;
    while (static_cast<long>(users.size()) < shots) {
      const long u = static_cast<long>(rng.below(static_cast<std::uint64_t>(split.n_users())));
      if (seen.insert(u).second) users.push_back(u);
    }
  } else {
    for (long k = 0; k < shots; ++k) {
      users.push_back(static_cast<long>(rng.below(static_cast<std::uint64_t>(split.n_users()))));
    }
  }
  std::vector<Sample> batch;
  for (const long u : users) {
    batch.push_back({target.user_offset + u, split.users[static_cast<size_t>(u)].valid.item, 1.0});
    for (const long neg : sampler.train_negatives(u, base.train_negatives)) {
      batch.push_back({target.user_offset + u, neg, 0.0});
    }
  }
  return batch;
}

model::Model train_nmf_recipe(const MarketView& source, const MarketView& target,
                              const model::ModelConfig& mcfg, const TrainConfig& cfg,
                              DataRegime mode, long n_users_total) {
  const long n_items = target.split->n_items_global;
  auto run_stage = [&](model::Model& m, const TrainConfig& stage_cfg, double lr) {
    TrainConfig c = stage_cfg;
    c.lr = lr;
    switch (mode) {
      case DataRegime::Single:
        train_single(m, *target.split, c, target.user_offset);
        break;
      case DataRegime::ConcatEqual:
        train_concat_equal(m, source, target, c);
        break;
      case DataRegime::JointConcat:
        train_joint_concat(m, source, target, c);
        break;
    }
  };

  model::Model gmf = model::make_gmf(n_users_total, n_items, mcfg, Rng::derive(cfg.seed, "gmf"));
  TrainConfig gcfg = cfg;
  gcfg.seed = Rng::derive(cfg.seed, "gmf-train");
  run_stage(gmf, gcfg, cfg.gmf_lr);

  model::Model mlp = model::make_mlp(n_users_total, n_items, mcfg, Rng::derive(cfg.seed, "mlp"));
  TrainConfig mcfg2 = cfg;
  mcfg2.seed = Rng::derive(cfg.seed, "mlp-train");
  run_stage(mlp, mcfg2, cfg.lr);

  model::Model nmf = model::make_nmf(gmf, mlp, mcfg.fusion_alpha);
  TrainConfig ncfg = cfg;
  ncfg.seed = Rng::derive(cfg.seed, "nmf-train");
  run_stage(nmf, ncfg, cfg.lr);
  return nmf;
}

model::Model forec_pretrain_stage(const data::SplitDataset& source,
                                  const data::SplitDataset& target,
                                  const model::ModelConfig& mcfg, const ForecConfig& fcfg,
                                  const TrainConfig& base) {
  const long n_total = source.n_users() + target.n_users();
  const MarketView tview{&target, 0};
  const MarketView sview{&source, target.n_users()};

  TrainConfig warm = base;
  warm.epochs = fcfg.warmup_epochs;
  warm.seed = Rng::derive(base.seed, "warmup");
  model::Model nmf = train_nmf_recipe(sview, tview, mcfg, warm, DataRegime::JointConcat, n_total);

  TrainConfig mbase = base;
  mbase.seed = Rng::derive(base.seed, "maml");
  maml_pretrain(nmf, {sview, tview}, fcfg.maml, mbase);
  return nmf;
}

model::Model nmfpp_pretrain_stage(const data::SplitDataset& source,
                                  const data::SplitDataset& target,
                                  const model::ModelConfig& mcfg, const TrainConfig& base) {
  const long n_total = source.n_users() + target.n_users();
  const MarketView tview{&target, 0};
  const MarketView sview{&source, target.n_users()};
  TrainConfig pre = base;
  pre.seed = Rng::derive(base.seed, "pretrain");
  return train_nmf_recipe(sview, tview, mcfg, pre, DataRegime::ConcatEqual, n_total);
}

model::Model fork_stage(const model::Model& pretrained, const ForecConfig& fcfg,
                        const TrainConfig& base) {
  return model::fork(pretrained, fcfg.k_freeze, fcfg.head_widths,
                     Rng::derive(base.seed, "fork"));
}

TrainResult finetune_stage(model::Model& forked, const data::SplitDataset& target,
                           const ForecConfig& fcfg, const TrainConfig& base) {
  TrainConfig ft = base;
  ft.epochs = fcfg.finetune_epochs;
  ft.l2 = fcfg.finetune_l2;
  ft.seed = Rng::derive(base.seed, "finetune");
  if (ft.neg_scope == TrainConfig::Scope::Auto) ft.neg_scope = TrainConfig::Scope::Global;
  return train_single(forked, target, ft, 0);
}

namespace {

PipelineResult fork_and_finetune(model::Model pretrain, const data::SplitDataset& target,
                                 const ForecConfig& fcfg, const TrainConfig& base) {
  PipelineResult result;
  model::Model forked = fork_stage(pretrain, fcfg, base);
  result.pretrain_model = std::move(pretrain);
  result.fork_model = forked;
  result.finetune = finetune_stage(forked, target, fcfg, base);
  result.final_model = std::move(forked);
  return result;
}

}  // namespace

PipelineResult forec_train(const data::SplitDataset& source, const data::SplitDataset& target,
                           const model::ModelConfig& mcfg, const ForecConfig& fcfg,
                           const TrainConfig& base) {
  return fork_and_finetune(forec_pretrain_stage(source, target, mcfg, fcfg, base), target,
                           fcfg, base);
}

PipelineResult nmf_forec_train(const data::SplitDataset& source, const data::SplitDataset& target,
                               const model::ModelConfig& mcfg, const ForecConfig& fcfg,
                               const TrainConfig& base) {
  return fork_and_finetune(nmfpp_pretrain_stage(source, target, mcfg, base), target, fcfg,
                           base);
}

model::Model maml_baseline_train(const data::SplitDataset& source,
                                 const data::SplitDataset& target,
                                 const model::ModelConfig& mcfg, const MamlConfig& maml,
                                 const TrainConfig& base, long warmup_epochs) {
  const long n_total = source.n_users() + target.n_users();
  const MarketView tview{&target, 0};
  const MarketView sview{&source, target.n_users()};

  TrainConfig warm = base;
  warm.epochs = warmup_epochs;
  warm.seed = Rng::derive(base.seed, "warmup");
  model::Model nmf = train_nmf_recipe(sview, tview, mcfg, warm, DataRegime::JointConcat, n_total);

  TrainConfig mbase = base;
  mbase.seed = Rng::derive(base.seed, "maml");
  maml_pretrain(nmf, {sview, tview}, maml, mbase);

  TrainConfig fast = base;
  fast.seed = Rng::derive(base.seed, "adapt");
  maml_fast_adapt(nmf, tview, maml.shots, maml.inner_lr, fast);
  return nmf;
}

}  // namespace forec::train
