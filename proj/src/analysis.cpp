#include "forec/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace forec::analysis {

MarketVector item_count_vector(const data::MarketDataset& dataset) {
  MarketVector v;
  v.market_code = dataset.market_code;
  v.counts.assign(static_cast<size_t>(dataset.items->size()), 0);
  for (const data::Interaction& it : dataset.interactions) {
    ++v.counts[static_cast<size_t>(it.item)];
  }
  return v;
}

MarketVector item_count_vector(const data::SplitDataset& split) {
  MarketVector v;
  v.market_code = split.market_code;
  v.counts.assign(static_cast<size_t>(split.n_items_global), 0);
  for (const data::UserSplit& us : split.users) {
    for (const data::Interaction& it : us.train) ++v.counts[static_cast<size_t>(it.item)];
    ++v.counts[static_cast<size_t>(us.valid.item)];
    ++v.counts[static_cast<size_t>(us.test.item)];
  }
  return v;
}

double cosine_similarity(const MarketVector& a, const MarketVector& b) {
  if (a.counts.size() != b.counts.size()) {
    throw std::invalid_argument("cosine_similarity: length mismatch");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.counts.size(); ++i) {
    const double x = static_cast<double>(a.counts[i]);
    const double y = static_cast<double>(b.counts[i]);
    if (a.counts[i] < 0 || b.counts[i] < 0) {
      throw std::invalid_argument("cosine_similarity: negative count");
    }
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) {
    throw std::invalid_argument("cosine_similarity: zero vector has no direction");
  }
  // sqrt of the product: cos([1,2,0],[2,1,0]) comes out as exactly 4/5.
  return dot / std::sqrt(na * nb);
}

RatingDistribution rating_distribution(const std::vector<data::InteractionRecord>& records) {
  RatingDistribution dist;
  std::vector<double> ratings;
  ratings.reserve(records.size());
  double sum = 0.0;
  for (const data::InteractionRecord& r : records) {
    if (r.rating < 1.0 || r.rating > 5.0) {
      throw std::invalid_argument("rating_distribution: rating out of [1,5]: " +
                                  std::to_string(r.rating));
    }
    const long star = std::lround(r.rating);
    ++dist.star_counts[std::min(5L, std::max(1L, star)) - 1];
    ratings.push_back(r.rating);
    sum += r.rating;
  }
  dist.total = static_cast<long>(records.size());
  if (dist.total == 0) return dist;
  dist.mean = sum / static_cast<double>(dist.total);
  std::sort(ratings.begin(), ratings.end());
  const size_t n = ratings.size();
  dist.median = (n % 2 == 1) ? ratings[n / 2] : 0.5 * (ratings[n / 2 - 1] + ratings[n / 2]);
  return dist;
}

std::vector<std::vector<double>> similarity_matrix(const std::vector<MarketVector>& vectors) {
  const size_t n = vectors.size();
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 1.0));
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      m[i][j] = m[j][i] = cosine_similarity(vectors[i], vectors[j]);
    }
  }
  return m;
}

}  // namespace forec::analysis
