#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "forec/data.hpp"
#include "forec/model.hpp"
#include "forec/optim.hpp"

namespace forec::train {

struct TrainConfig {
  double lr = 0.01;      // MLP and NMF stages
  double gmf_lr = 0.005; // GMF stages
  double l2 = 1e-7;
  long epochs = 20;
  long batch_size = 256;
  long train_negatives = 4;
  enum class Optimizer { Adam, Sgd };
  Optimizer optimizer = Optimizer::Adam;
  enum class Scope { Auto, Market, Global };
  Scope neg_scope = Scope::Auto;  // Auto: market for single, global for cross
  std::uint64_t seed = 1;
};

struct MamlConfig {
  double inner_lr = 0.01;    // alpha, the adaptation step size
  double meta_lr = 0.1;      // beta, the meta step size
  long shots = 20;           // K
  long meta_iterations = 0;  // 0: one pass over the largest market per epoch
  bool second_order = false;
  double hvp_step = 1e-4;  // gradient finite-difference perturbation
};

struct ForecConfig {
  MamlConfig maml;
  long k_freeze = 2;
  std::vector<long> head_widths = {16, 32, 16};
  double finetune_l2 = 0.001;
  long finetune_epochs = 20;
  long warmup_epochs = 5;  // joint-concatenation initialization of theta
};

// One labelled training example; user indices are already offset into the
// model's user table.
struct Sample {
  long user = 0;
  long item = 0;
  double label = 1.0;
};

// A market's split bound to its row offset in a (possibly joint) user table.
struct MarketView {
  const data::SplitDataset* split = nullptr;
  long user_offset = 0;
};

struct TrainResult {
  std::vector<double> loss_history;            // per-epoch mean BCE
  std::vector<std::array<long, 2>> epoch_mix;  // per-epoch (source, target) positives
  std::vector<std::string> warnings;
};

// Loss and gradients of mean BCE over `batch` at parameters `theta`.
ad::GradMap batch_gradients(const model::Model& m, const ad::ParamSet& theta,
                            std::span<const Sample> batch, double* loss_out = nullptr);

// Single-market training: every epoch re-draws `train_negatives` negatives
// per positive, shuffles, and optimizes mean BCE per minibatch.
TrainResult train_single(model::Model& m, const data::SplitDataset& market,
                         const TrainConfig& cfg, long user_offset = 0);

// Cross-market ++ training: each epoch takes all target train interactions
// plus an equal number sampled without replacement from the source market.
TrainResult train_concat_equal(model::Model& m, const MarketView& source,
                               const MarketView& target, const TrainConfig& cfg);

// Plain union of both markets' train interactions, used to initialize the
// market-agnostic parameters before meta-training.
TrainResult train_joint_concat(model::Model& m, const MarketView& source,
                               const MarketView& target, const TrainConfig& cfg);

// One adaptation step: theta' = theta - alpha * grad(theta) on `batch`.
// Exactly sgd_step with zero weight decay.
ad::ParamSet maml_inner_step(const model::Model& m, const ad::ParamSet& theta,
                             std::span<const Sample> batch, double alpha);

// K positives drawn uniformly from the view's train interactions (without
// replacement when possible), each with `negatives` sampled negatives.
std::vector<Sample> sample_shot_batch(const MarketView& view,
                                      data::NegativeSampler& sampler, long shots,
                                      long negatives, Rng& rng,
                                      std::vector<std::string>* warnings);

struct MamlResult {
  std::vector<double> meta_loss_history;  // summed eval-batch loss per iteration
  std::vector<std::string> warnings;
};

// Market-agnostic meta-training. Per iteration and market: sample a K-shot
// adapt batch, take one inner step, sample a K-shot eval batch; then apply
// one meta step theta <- theta - beta * sum_i grad L_i(theta'_i). First-order
// mode uses the eval gradient at theta'_i; second-order mode subtracts
// alpha * H * g computed by finite differences of the adapt gradient.
MamlResult maml_pretrain(model::Model& m, const std::vector<MarketView>& markets,
                         const MamlConfig& maml, const TrainConfig& base);

// One K-shot gradient step on interactions sampled from the validation split.
void maml_fast_adapt(model::Model& m, const MarketView& target, long shots,
                     double alpha, const TrainConfig& base);

// The batch maml_fast_adapt trains on, exposed so the adaptation can be
// reproduced and checked as a plain sgd_step composition.
std::vector<Sample> maml_fast_adapt_batch(const MarketView& target, long shots,
                                          const TrainConfig& base);

struct PipelineResult {
  model::Model final_model;
  model::Model pretrain_model;  // market-agnostic parameters before forking
  model::Model fork_model;      // immediately after forking
  TrainResult finetune;
  std::vector<std::string> warnings;
};

// The NMF recipe: pre-train GMF and MLP individually, fuse, train the fused
// model. `mode` selects the data regime for every stage.
enum class DataRegime { Single, ConcatEqual, JointConcat };
model::Model train_nmf_recipe(const MarketView& source, const MarketView& target,
                              const model::ModelConfig& mcfg, const TrainConfig& cfg,
                              DataRegime mode, long n_users_total);

// Pipeline stages, exposed individually so runs can resume from persisted
// stage checkpoints. Stage seeds derive from base.seed, so a resumed run is
// bit-identical to an uninterrupted one.
model::Model forec_pretrain_stage(const data::SplitDataset& source,
                                  const data::SplitDataset& target,
                                  const model::ModelConfig& mcfg, const ForecConfig& fcfg,
                                  const TrainConfig& base);
model::Model nmfpp_pretrain_stage(const data::SplitDataset& source,
                                  const data::SplitDataset& target,
                                  const model::ModelConfig& mcfg, const TrainConfig& base);
model::Model fork_stage(const model::Model& pretrained, const ForecConfig& fcfg,
                        const TrainConfig& base);
TrainResult finetune_stage(model::Model& forked, const data::SplitDataset& target,
                           const ForecConfig& fcfg, const TrainConfig& base);

// Full pipeline: joint-concat initialization, meta pre-training over
// {source, target}, fork with frozen lower layers plus a fresh head,
// fine-tune on the target market only.
PipelineResult forec_train(const data::SplitDataset& source, const data::SplitDataset& target,
                           const model::ModelConfig& mcfg, const ForecConfig& fcfg,
                           const TrainConfig& base);

// Ablation of the meta stage: pre-train with ++ equal sampling instead of
// meta-learning, then fork and fine-tune identically.
PipelineResult nmf_forec_train(const data::SplitDataset& source, const data::SplitDataset& target,
                               const model::ModelConfig& mcfg, const ForecConfig& fcfg,
                               const TrainConfig& base);

// Meta-learning baseline: market-agnostic pre-training followed by a single
// K-shot fast adaptation on the target validation split.
model::Model maml_baseline_train(const data::SplitDataset& source,
                                 const data::SplitDataset& target,
                                 const model::ModelConfig& mcfg, const MamlConfig& maml,
                                 const TrainConfig& base, long warmup_epochs);

}  // namespace forec::train
