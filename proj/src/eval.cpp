#include "forec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace forec::eval {

ScoreFn model_scorer(const model::Model& m, long user_offset) {
  return [&m, user_offset](long user, std::span<const long> items) {
    return m.score_items(user_offset + user, items);
  };
}

RankingResult rank_heldout(const ScoreFn& scorer, long user, long heldout_item,
                           std::span<const long> negatives) {
  std::vector<long> candidates;
  candidates.reserve(negatives.size() + 1);
  candidates.push_back(heldout_item);
  candidates.insert(candidates.end(), negatives.begin(), negatives.end());
  const std::vector<double> scores = scorer(user, candidates);
  if (scores.size() != candidates.size()) {
    throw std::runtime_error("rank_heldout: scorer returned wrong count");
  }
  for (const double s : scores) {
    if (std::isnan(s)) throw std::runtime_error("rank_heldout: NaN score");
  }
  const double target = scores[0];
  long rank = 1;
  for (size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] >= target) ++rank;  // ties count against the held-out item
  }
  return {user, rank, static_cast<long>(candidates.size())};
}

double hr_at_k(long rank, long k) {
  if (rank < 1) throw std::invalid_argument("hr_at_k: rank must be >= 1");
  return rank <= k ? 1.0 : 0.0;
}

double ndcg_at_k(long rank, long k) {
  if (rank < 1) throw std::invalid_argument("ndcg_at_k: rank must be >= 1");
  // Single relevant item, so IDCG = 1.
  return rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

MetricReport evaluate(const ScoreFn& scorer, const data::SplitDataset& split,
                      const data::NegativeSampler& sampler, long k, Heldout which,
                      long eval_negatives) {
  MetricReport report;
  report.k = k;
  report.data_hash = data::split_fingerprint(split);
  double hr_sum = 0.0, ndcg_sum = 0.0;

  for (long u = 0; u < split.n_users(); ++u) {
    const data::UserSplit& us = split.users[static_cast<size_t>(u)];
    std::vector<long> negatives;
    try {
      negatives = sampler.eval_negatives(u, eval_negatives);
    } catch (const std::exception&) {
      report.skipped_users.push_back(u);
      continue;
    }
    const long heldout = which == Heldout::Test ? us.test.item : us.valid.item;
    const RankingResult r = rank_heldout(scorer, u, heldout, negatives);
    UserMetric um;
    um.user = u;
    um.rank = r.rank;
    um.hr = hr_at_k(r.rank, k);
    um.ndcg = ndcg_at_k(r.rank, k);
    um.train_count = static_cast<long>(us.train.size());
    hr_sum += um.hr;
    ndcg_sum += um.ndcg;
    report.per_user.push_back(um);
  }
  report.evaluated_users = static_cast<long>(report.per_user.size());
  if (report.evaluated_users > 0) {
    report.hr = hr_sum / static_cast<double>(report.evaluated_users);
    report.ndcg = ndcg_sum / static_cast<double>(report.evaluated_users);
  }
  return report;
}

std::vector<GroupReport> group_metrics(const MetricReport& report, long n_groups) {
  const long n = static_cast<long>(report.per_user.size());
  if (n < n_groups) throw std::invalid_argument("group_metrics: fewer users than groups");
  std::vector<long> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0L);
  std::stable_sort(order.begin(), order.end(), [&](long a, long b) {
    const UserMetric& ua = report.per_user[static_cast<size_t>(a)];
    const UserMetric& ub = report.per_user[static_cast<size_t>(b)];
    if (ua.train_count != ub.train_count) return ua.train_count < ub.train_count;
    return ua.user < ub.user;
  });

  const long base = n / n_groups;  // remainder goes to the warmest group
  std::vector<GroupReport> groups;
  long pos = 0;
  for (long g = 0; g < n_groups; ++g) {
    const long take = g == n_groups - 1 ? n - pos : base;
    GroupReport gr;
    gr.group = g;
    gr.users = take;
    double hr = 0.0, ndcg = 0.0, train = 0.0;
    for (long i = 0; i < take; ++i) {
      const UserMetric& um = report.per_user[static_cast<size_t>(order[static_cast<size_t>(pos + i)])];
      hr += um.hr;
      ndcg += um.ndcg;
      train += static_cast<double>(um.train_count);
    }
    gr.hr = hr / static_cast<double>(take);
    gr.ndcg = ndcg / static_cast<double>(take);
    gr.mean_train_count = train / static_cast<double>(take);
    groups.push_back(gr);
    pos += take;
  }
  return groups;
}

std::vector<GroupReport> user_group_report(const ScoreFn& scorer,
                                           const data::SplitDataset& split,
                                           const data::NegativeSampler& sampler,
                                           long n_groups, long k) {
  return group_metrics(evaluate(scorer, split, sampler, k), n_groups);
}

data::SplitDataset truncate_train(const data::SplitDataset& split, double fraction,
                                  std::vector<std::string>* warnings) {
  if (fraction <= 0.0 || fraction > 1.0) {
    throw std::invalid_argument("truncate_train: fraction must lie in (0, 1]");
  }
  data::SplitDataset out = split;
  for (long u = 0; u < out.n_users(); ++u) {
    data::UserSplit& us = out.users[static_cast<size_t>(u)];
    const long n = static_cast<long>(us.train.size());
    long keep = static_cast<long>(std::ceil(fraction * static_cast<double>(n)));
    if (keep < 1) {
      keep = 1;
      if (warnings) {
        warnings->push_back("user " + std::to_string(u) + " kept 1 interaction");
      }
    }
    if (keep < n) {
      // Train is sorted by timestamp; the most recent interactions survive.
      us.train.erase(us.train.begin(), us.train.end() - keep);
    }
    std::set<long> known;
    for (const data::Interaction& it : us.train) known.insert(it.item);
    known.insert(us.valid.item);
    known.insert(us.test.item);
    us.known_positives.assign(known.begin(), known.end());
  }
  return out;
}

std::vector<AblationPoint> target_size_ablation(const PipelineFn& pipeline,
                                                const data::SplitDataset& target,
                                                const std::vector<double>& fractions,
                                                std::uint64_t sampler_seed, long k) {
  std::vector<AblationPoint> points;
  for (const double fraction : fractions) {
    const data::SplitDataset reduced = truncate_train(target, fraction);
    const model::Model m = pipeline(reduced);
    data::NegativeSampler sampler(reduced, data::NegScope::Market, sampler_seed);
    AblationPoint p;
    p.fraction = fraction;
    p.report = evaluate(model_scorer(m), reduced, sampler, k);
    points.push_back(std::move(p));
  }
  return points;
}

namespace {

// Regularized incomplete beta function, continued-fraction form.
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 200;
  constexpr double kEps = 3e-14;
  constexpr double kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

double betai(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double bt = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                             a * std::log(x) + b * std::log(1.0 - x));
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

}  // namespace

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired_t_test: length mismatch");
  if (a.size() < 2) throw std::invalid_argument("paired_t_test: need at least 2 pairs");
  const long n = static_cast<long>(a.size());
  double mean = 0.0;
  for (long i = 0; i < n; ++i) mean += a[static_cast<size_t>(i)] - b[static_cast<size_t>(i)];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (long i = 0; i < n; ++i) {
    const double d = a[static_cast<size_t>(i)] - b[static_cast<size_t>(i)] - mean;
    ss += d * d;
  }
  TTestResult r;
  r.df = n - 1;
  const double var = ss / static_cast<double>(n - 1);
  if (var == 0.0) {
    r.t = mean == 0.0 ? 0.0 : (mean > 0 ? INFINITY : -INFINITY);
    r.p = mean == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.t = mean / std::sqrt(var / static_cast<double>(n));
  const double df = static_cast<double>(r.df);
  r.p = betai(df / 2.0, 0.5, df / (df + r.t * r.t));
  return r;
}

}  // namespace forec::eval
