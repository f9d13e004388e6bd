#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "forec/rng.hpp"

namespace forec::data {

// One parsed line of a ratings file: user_id \t item_id \t rating \t timestamp.
struct InteractionRecord {
  std::string user_id;
  std::string item_id;
  double rating = 0.0;
  long timestamp = 0;
};

// Indexed interaction with an implicit positive label.
struct Interaction {
  long user = 0;
  long item = 0;
  long timestamp = 0;
};

// Item vocabulary. After align_items() it is shared by all markets of an
// experiment, so equal item ids map to equal indices everywhere.
struct ItemIndex {
  std::vector<std::string> ids;                    // index -> id
  std::unordered_map<std::string, long> index;     // id -> index
  long size() const { return static_cast<long>(ids.size()); }
};

// A single market after filtering: market-local users, global items.
struct MarketDataset {
  std::string market_code;
  std::vector<std::string> user_ids;
  std::unordered_map<std::string, long> user_index;
  std::shared_ptr<const ItemIndex> items;
  std::vector<Interaction> interactions;  // input order preserved
  std::vector<long> items_present;        // sorted distinct item indices

  long n_users() const { return static_cast<long>(user_ids.size()); }
};

// Per-user leave-one-out partition. Train is sorted by (timestamp, input
// order); the latest interaction is the test item, the second-latest the
// validation item.
struct UserSplit {
  std::vector<Interaction> train;
  Interaction valid;
  Interaction test;
  std::vector<long> known_positives;  // sorted; train + valid + test items
};

struct SplitDataset {
  std::string market_code;
  long n_items_global = 0;
  std::vector<long> items_present;
  std::vector<std::string> user_ids;  // may be empty for synthetic fixtures
  std::vector<UserSplit> users;

  long n_users() const { return static_cast<long>(users.size()); }
  long train_size() const;
};

std::vector<InteractionRecord> load_ratings(const std::string& path,
                                            const std::string& market_code = "");
void write_ratings(const std::string& path,
                   const std::vector<InteractionRecord>& records);

// Iteratively removes users and items with fewer than min_count interactions
// until a fixed point: the unique maximal (k,k)-core. Preserves input order.
std::vector<InteractionRecord> kcore_filter(std::vector<InteractionRecord> records,
                                            long min_count = 5);

// Indexes records into a dataset with a market-local item vocabulary.
// Users and items are numbered by sorted id, so the result is independent
// of record order.
MarketDataset build_market_dataset(const std::vector<InteractionRecord>& records,
                                   const std::string& market_code);

// Re-indexes all datasets against one vocabulary covering the union of
// their item ids. Returns the shared index.
std::shared_ptr<const ItemIndex> align_items(std::vector<MarketDataset>& datasets);

SplitDataset leave_one_out_split(const MarketDataset& dataset);

enum class NegScope {
  Market,  // sample from the items present in this market
  Global,  // sample from the full shared vocabulary
};

// Draws negative items for training and evaluation. Training draws advance
// the sampler's stream (fresh negatives every epoch); evaluation draws use
// a stream derived from (seed, user), so they are reproducible regardless
// of processing order.
class NegativeSampler {
 public:
  NegativeSampler(const SplitDataset& split, NegScope scope, std::uint64_t seed);

  // n items uniform over non-positive pool items, independent draws.
  std::vector<long> train_negatives(long user, long n);
  // n distinct non-positive items, deterministic per (seed, user).
  std::vector<long> eval_negatives(long user, long n = 99) const;

  long pool_size() const { return static_cast<long>(pool_.size()); }
  const SplitDataset& split() const { return *split_; }

 private:
  long eligible_count(long user) const;

  const SplitDataset* split_;
  std::vector<long> pool_;  // sorted candidate item indices
  std::uint64_t seed_;
  Rng rng_;
};

// Prepared experiment artifacts: aligned vocabulary plus one split per market.
struct PreparedData {
  std::shared_ptr<const ItemIndex> items;
  std::vector<SplitDataset> markets;

  const SplitDataset& market(const std::string& code) const;
};

void save_prepared(const std::string& dir, const PreparedData& prepared);
PreparedData load_prepared(const std::string& dir);

// Stable content hash of a split, for run manifests and reports.
std::string split_fingerprint(const SplitDataset& split);

}  // namespace forec::data
