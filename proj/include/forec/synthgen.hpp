#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "forec/data.hpp"

namespace forec::synth {

// Configuration for a seeded pair of markets with shared items, disjoint
// users, and a preference correlation dialed by `correlation`.
struct SynthConfig {
  long n_items = 500;
  long n_users_source = 2000;
  long n_users_target = 200;
  long latent_dim = 8;
  double correlation = 0.5;  // rho between the two market preference directions
  long interactions_min = 5;
  long interactions_max = 15;
  double noise_std = 0.15;  // affinity noise, added before the softmax
  std::uint64_t seed = 1;
  std::string source_code = "src";
  std::string target_code = "tgt";
};

struct SynthPair {
  std::vector<data::InteractionRecord> source;
  std::vector<data::InteractionRecord> target;
};

// Raw interaction records in the ratings-file format, before any filtering.
SynthPair generate_pair_records(const SynthConfig& config);

// Filtered, aligned datasets ready for splitting. Applies the 5-core filter
// to each market and re-checks the result.
std::pair<data::MarketDataset, data::MarketDataset> generate_pair(const SynthConfig& config);

void validate(const SynthConfig& config);

}  // namespace forec::synth
