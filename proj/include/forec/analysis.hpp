#pragma once

#include <string>
#include <vector>

#include "forec/data.hpp"

namespace forec::analysis {

// Per-item interaction counts of one market over the global vocabulary.
struct MarketVector {
  std::string market_code;
  std::vector<long> counts;
};

MarketVector item_count_vector(const data::MarketDataset& dataset);
MarketVector item_count_vector(const data::SplitDataset& split);

// a.b / (|a||b|); both vectors must have a nonzero entry.
double cosine_similarity(const MarketVector& a, const MarketVector& b);

struct RatingDistribution {
  long star_counts[5] = {0, 0, 0, 0, 0};  // stars 1..5
  double mean = 0.0;
  double median = 0.0;
  long total = 0;
};

RatingDistribution rating_distribution(const std::vector<data::InteractionRecord>& records);

// All-pairs cosine similarity, same order as the input vectors.
std::vector<std::vector<double>> similarity_matrix(const std::vector<MarketVector>& vectors);

}  // namespace forec::analysis
