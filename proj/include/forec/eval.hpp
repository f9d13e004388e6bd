#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "forec/data.hpp"
#include "forec/model.hpp"

namespace forec::eval {

// Rank of the held-out item among {held-out} + sampled negatives, 1-based.
// Ties score against the held-out item, so a constant scorer ranks last.
struct RankingResult {
  long user = 0;
  long rank = 0;
  long candidates = 0;
};

struct UserMetric {
  long user = 0;
  long rank = 0;
  double hr = 0.0;
  double ndcg = 0.0;
  long train_count = 0;
};

struct MetricReport {
  long k = 10;
  double hr = 0.0;    // mean over evaluated users
  double ndcg = 0.0;  // mean over evaluated users
  long evaluated_users = 0;
  std::vector<UserMetric> per_user;  // ordered by user index
  std::vector<long> skipped_users;   // unevaluable (negative pool too small)
  std::string data_hash;
};

// Scores `items` for one market-local user; one call per candidate list so
// batched and per-pair paths stay bit-identical.
using ScoreFn = std::function<std::vector<double>(long user, std::span<const long> items)>;

ScoreFn model_scorer(const model::Model& m, long user_offset = 0);

RankingResult rank_heldout(const ScoreFn& scorer, long user, long heldout_item,
                           std::span<const long> negatives);

double hr_at_k(long rank, long k = 10);
double ndcg_at_k(long rank, long k = 10);

enum class Heldout { Test, Valid };

MetricReport evaluate(const ScoreFn& scorer, const data::SplitDataset& split,
                      const data::NegativeSampler& sampler, long k = 10,
                      Heldout which = Heldout::Test, long eval_negatives = 99);

struct GroupReport {
  long group = 0;  // 0 = coldest
  long users = 0;
  double mean_train_count = 0.0;
  double hr = 0.0;
  double ndcg = 0.0;
};

// Users sorted by train-interaction count (ties by user index) and cut into
// n_groups equal groups, remainder to the warmest.
std::vector<GroupReport> group_metrics(const MetricReport& report, long n_groups = 5);

std::vector<GroupReport> user_group_report(const ScoreFn& scorer,
                                           const data::SplitDataset& split,
                                           const data::NegativeSampler& sampler,
                                           long n_groups = 5, long k = 10);

// Keeps the ceil(fraction * n) most recent train interactions per user
// (at least one), recomputing known positives.
data::SplitDataset truncate_train(const data::SplitDataset& split, double fraction,
                                  std::vector<std::string>* warnings = nullptr);

using PipelineFn = std::function<model::Model(const data::SplitDataset&)>;

struct AblationPoint {
  double fraction = 1.0;
  MetricReport report;
};

// Retrains from scratch on progressively truncated target train data and
// evaluates each model on the unchanged test split.
std::vector<AblationPoint> target_size_ablation(const PipelineFn& pipeline,
                                                const data::SplitDataset& target,
                                                const std::vector<double>& fractions,
                                                std::uint64_t sampler_seed, long k = 10);

struct TTestResult {
  double t = 0.0;
  long df = 0;
  double p = 1.0;  // two-sided
};

// Paired Student's t-test over per-user metric pairs.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace forec::eval
