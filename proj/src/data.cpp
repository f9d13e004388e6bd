#include "forec/data.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "forec/hash.hpp"

namespace forec::data {

namespace {

namespace fs = std::filesystem;

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    const size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw std::runtime_error(where + ": not a number: '" + s + "'");
  }
  if (used != s.size()) throw std::runtime_error(where + ": not a number: '" + s + "'");
  return v;
}

long parse_long(const std::string& s, const std::string& where) {
  size_t used = 0;
  long v = 0;
  try {
    v = std::stol(s, &used);
  } catch (const std::exception&) {
    throw std::runtime_error(where + ": not an integer: '" + s + "'");
  }
  if (used != s.size()) throw std::runtime_error(where + ": not an integer: '" + s + "'");
  return v;
}

std::string loc(const std::string& path, long line_no) {
  return path + ":" + std::to_string(line_no);
}

}  // namespace

long SplitDataset::train_size() const {
  long n = 0;
  for (const UserSplit& u : users) n += static_cast<long>(u.train.size());
  return n;
}

std::vector<InteractionRecord> load_ratings(const std::string& path,
                                            const std::string& market_code) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open ratings file: " + path +
                             (market_code.empty() ? "" : " (market " + market_code + ")"));
  }
  std::vector<InteractionRecord> records;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line, '\t');
    if (fields.size() != 4) {
      throw std::runtime_error(loc(path, line_no) + ": expected 4 tab-separated fields, got " +
                               std::to_string(fields.size()));
    }
    InteractionRecord rec;
    rec.user_id = fields[0];
    rec.item_id = fields[1];
    if (rec.user_id.empty()) throw std::runtime_error(loc(path, line_no) + ": empty user id");
    if (rec.item_id.empty()) throw std::runtime_error(loc(path, line_no) + ": empty item id");
    rec.rating = parse_double(fields[2], loc(path, line_no));
    if (rec.rating < 1.0 || rec.rating > 5.0) {
      throw std::runtime_error(loc(path, line_no) + ": rating out of [1,5]: '" + fields[2] + "'");
    }
    rec.timestamp = parse_long(fields[3], loc(path, line_no));
    if (rec.timestamp < 0) {
      throw std::runtime_error(loc(path, line_no) + ": negative timestamp");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void write_ratings(const std::string& path, const std::vector<InteractionRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write ratings file: " + path);
  char num[64];
  for (const InteractionRecord& r : records) {
    std::snprintf(num, sizeof(num), "%g", r.rating);
    out << r.user_id << '\t' << r.item_id << '\t' << num << '\t' << r.timestamp << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<InteractionRecord> kcore_filter(std::vector<InteractionRecord> records,
                                            long min_count) {
  if (min_count < 1) throw std::invalid_argument("kcore_filter: min_count must be >= 1");

  std::unordered_map<std::string, std::vector<size_t>> user_recs, item_recs;
  for (size_t i = 0; i < records.size(); ++i) {
    user_recs[records[i].user_id].push_back(i);
    item_recs[records[i].item_id].push_back(i);
  }
  std::unordered_map<std::string, long> user_count, item_count;
  for (const auto& [u, v] : user_recs) user_count[u] = static_cast<long>(v.size());
  for (const auto& [i, v] : item_recs) item_count[i] = static_cast<long>(v.size());

  std::vector<char> alive(records.size(), 1);
  std::deque<std::pair<bool, std::string>> work;  // (is_user, key)
  for (const auto& [u, c] : user_count) {
    if (c < min_count) work.emplace_back(true, u);
  }
  for (const auto& [i, c] : item_count) {
    if (c < min_count) work.emplace_back(false, i);
  }

  while (!work.empty()) {
    auto [is_user, key] = work.front();
    work.pop_front();
    const auto& recs = is_user ? user_recs[key] : item_recs[key];
    for (const size_t ri : recs) {
      if (!alive[ri]) continue;
      alive[ri] = 0;
      const InteractionRecord& r = records[ri];
      long& uc = user_count[r.user_id];
      long& ic = item_count[r.item_id];
      --uc;
      --ic;
      if (!is_user || r.user_id != key) {
        if (uc == min_count - 1) work.emplace_back(true, r.user_id);
      }
      if (is_user || r.item_id != key) {
        if (ic == min_count - 1) work.emplace_back(false, r.item_id);
      }
    }
  }

  std::vector<InteractionRecord> out;
  out.reserve(records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    if (alive[i]) out.push_back(std::move(records[i]));
  }
  return out;
}

MarketDataset build_market_dataset(const std::vector<InteractionRecord>& records,
                                   const std::string& market_code) {
  MarketDataset ds;
  ds.market_code = market_code;

  std::set<std::string> users, items;
  for (const InteractionRecord& r : records) {
    users.insert(r.user_id);
    items.insert(r.item_id);
  }
  ds.user_ids.assign(users.begin(), users.end());
  for (size_t i = 0; i < ds.user_ids.size(); ++i) {
    ds.user_index[ds.user_ids[i]] = static_cast<long>(i);
  }
  auto idx = std::make_shared<ItemIndex>();
  idx->ids.assign(items.begin(), items.end());
  for (size_t i = 0; i < idx->ids.size(); ++i) idx->index[idx->ids[i]] = static_cast<long>(i);
  ds.items = idx;

  ds.interactions.reserve(records.size());
  for (const InteractionRecord& r : records) {
    ds.interactions.push_back(
        {ds.user_index.at(r.user_id), ds.items->index.at(r.item_id), r.timestamp});
  }
  std::set<long> present;
  for (const Interaction& it : ds.interactions) present.insert(it.item);
  ds.items_present.assign(present.begin(), present.end());
  return ds;
}

std::shared_ptr<const ItemIndex> align_items(std::vector<MarketDataset>& datasets) {
  if (datasets.empty()) throw std::invalid_argument("align_items: no datasets");
  std::set<std::string> all_ids;
  for (const MarketDataset& ds : datasets) {
    all_ids.insert(ds.items->ids.begin(), ds.items->ids.end());
  }
  auto shared = std::make_shared<ItemIndex>();
  shared->ids.assign(all_ids.begin(), all_ids.end());
  for (size_t i = 0; i < shared->ids.size(); ++i) {
    shared->index[shared->ids[i]] = static_cast<long>(i);
  }
  for (MarketDataset& ds : datasets) {
    std::vector<long> remap(static_cast<size_t>(ds.items->size()));
    for (long old = 0; old < ds.items->size(); ++old) {
      remap[static_cast<size_t>(old)] = shared->index.at(ds.items->ids[static_cast<size_t>(old)]);
    }
    for (Interaction& it : ds.interactions) it.item = remap[static_cast<size_t>(it.item)];
    std::set<long> present;
    for (const Interaction& it : ds.interactions) present.insert(it.item);
    ds.items_present.assign(present.begin(), present.end());
    ds.items = shared;
  }
  return shared;
}

SplitDataset leave_one_out_split(const MarketDataset& dataset) {
  SplitDataset split;
  split.market_code = dataset.market_code;
  split.n_items_global = dataset.items->size();
  split.items_present = dataset.items_present;
  split.user_ids = dataset.user_ids;
  split.users.resize(static_cast<size_t>(dataset.n_users()));

  std::vector<std::vector<Interaction>> per_user(static_cast<size_t>(dataset.n_users()));
  for (const Interaction& it : dataset.interactions) {
    per_user[static_cast<size_t>(it.user)].push_back(it);
  }
  for (long u = 0; u < dataset.n_users(); ++u) {
    auto& list = per_user[static_cast<size_t>(u)];
    if (list.size() < 3) {
      throw std::invalid_argument("leave_one_out_split: user " +
                                  (u < static_cast<long>(dataset.user_ids.size())
                                       ? dataset.user_ids[static_cast<size_t>(u)]
                                       : std::to_string(u)) +
                                  " has fewer than 3 interactions");
    }
    // Stable sort: timestamp ties keep input order, so the later record
    // in the file wins the test slot.
    std::stable_sort(list.begin(), list.end(),
                     [](const Interaction& a, const Interaction& b) {
                       return a.timestamp < b.timestamp;
                     });
    UserSplit& us = split.users[static_cast<size_t>(u)];
    us.test = list.back();
    us.valid = list[list.size() - 2];
    us.train.assign(list.begin(), list.end() - 2);
    std::set<long> known;
    for (const Interaction& it : list) known.insert(it.item);
    us.known_positives.assign(known.begin(), known.end());
  }
  return split;
}

NegativeSampler::NegativeSampler(const SplitDataset& split, NegScope scope,
                                 std::uint64_t seed)
    : split_(&split), seed_(seed), rng_(Rng::derive(seed, "train-neg")) {
  if (scope == NegScope::Market) {
    pool_ = split.items_present;
  } else {
    pool_.resize(static_cast<size_t>(split.n_items_global));
    for (long i = 0; i < split.n_items_global; ++i) pool_[static_cast<size_t>(i)] = i;
  }
  if (pool_.empty()) throw std::invalid_argument("NegativeSampler: empty item pool");
}

long NegativeSampler::eligible_count(long user) const {
  const auto& known = split_->users[static_cast<size_t>(user)].known_positives;
  long overlap = 0;
  for (const long item : known) {
    if (std::binary_search(pool_.begin(), pool_.end(), item)) ++overlap;
  }
  return static_cast<long>(pool_.size()) - overlap;
}

std::vector<long> NegativeSampler::train_negatives(long user, long n) {
  if (eligible_count(user) <= 0) {
    throw std::runtime_error("train_negatives: user " + std::to_string(user) +
                             " has no non-positive items to sample");
  }
  const auto& known = split_->users[static_cast<size_t>(user)].known_positives;
  std::vector<long> out;
  out.reserve(static_cast<size_t>(n));
  while (static_cast<long>(out.size()) < n) {
    const long item = pool_[rng_.below(pool_.size())];
    if (std::binary_search(known.begin(), known.end(), item)) continue;
    out.push_back(item);
  }
  return out;
}

std::vector<long> NegativeSampler::eval_negatives(long user, long n) const {
  if (eligible_count(user) < n) {
    throw std::runtime_error("eval_negatives: user " + std::to_string(user) +
                             " has fewer than " + std::to_string(n) +
                             " non-positive items in the pool");
  }
  const auto& known = split_->users[static_cast<size_t>(user)].known_positives;
  Rng rng(Rng::derive(seed_, "eval-neg", static_cast<std::uint64_t>(user)));
  std::vector<long> out;
  std::set<long> seen;
  out.reserve(static_cast<size_t>(n));
  while (static_cast<long>(out.size()) < n) {
    const long item = pool_[rng.below(pool_.size())];
    if (std::binary_search(known.begin(), known.end(), item)) continue;
    if (!seen.insert(item).second) continue;
    out.push_back(item);
  }
  return out;
}

const SplitDataset& PreparedData::market(const std::string& code) const {
  for (const SplitDataset& m : markets) {
    if (m.market_code == code) return m;
  }
  throw std::invalid_argument("unknown market: " + code);
}

namespace {

void write_split_file(const std::string& path, const SplitDataset& split,
                      const char* which) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (long u = 0; u < split.n_users(); ++u) {
    const UserSplit& us = split.users[static_cast<size_t>(u)];
    auto emit = [&](const Interaction& it) {
      out << u << '\t' << it.item << '\t' << it.timestamp << '\n';
    };
    if (std::string(which) == "train") {
      for (const Interaction& it : us.train) emit(it);
    } else if (std::string(which) == "valid") {
      emit(us.valid);
    } else {
      emit(us.test);
    }
  }
}

void read_split_file(const std::string& path, SplitDataset& split, const char* which) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_fields(line, '\t');
    if (fields.size() != 3) {
      throw std::runtime_error(loc(path, line_no) + ": expected 3 fields");
    }
    Interaction it;
    const long user = parse_long(fields[0], loc(path, line_no));
    it.user = user;
    it.item = parse_long(fields[1], loc(path, line_no));
    it.timestamp = parse_long(fields[2], loc(path, line_no));
    if (user < 0) throw std::runtime_error(loc(path, line_no) + ": negative user index");
    if (static_cast<size_t>(user) >= split.users.size()) {
      split.users.resize(static_cast<size_t>(user) + 1);
    }
    UserSplit& us = split.users[static_cast<size_t>(user)];
    if (std::string(which) == "train") {
      us.train.push_back(it);
    } else if (std::string(which) == "valid") {
      us.valid = it;
    } else {
      us.test = it;
    }
  }
}

}  // namespace

void save_prepared(const std::string& dir, const PreparedData& prepared) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir + "/items.tsv");
    if (!out) throw std::runtime_error("cannot write " + dir + "/items.tsv");
    for (size_t i = 0; i < prepared.items->ids.size(); ++i) {
      out << prepared.items->ids[i] << '\t' << i << '\n';
    }
  }
  {
    std::ofstream out(dir + "/markets.tsv");
    for (const SplitDataset& m : prepared.markets) out << m.market_code << '\n';
  }
  for (const SplitDataset& m : prepared.markets) {
    const std::string base = dir + "/" + m.market_code;
    {
      std::ofstream out(base + ".users.tsv");
      for (size_t i = 0; i < m.user_ids.size(); ++i) {
        out << m.user_ids[i] << '\t' << i << '\n';
      }
    }
    write_split_file(base + ".train.tsv", m, "train");
    write_split_file(base + ".valid.tsv", m, "valid");
    write_split_file(base + ".test.tsv", m, "test");
  }
}

PreparedData load_prepared(const std::string& dir) {
  PreparedData prepared;
  auto idx = std::make_shared<ItemIndex>();
  {
    std::ifstream in(dir + "/items.tsv");
    if (!in) throw std::runtime_error("cannot read " + dir + "/items.tsv");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto fields = split_fields(line, '\t');
      if (fields.size() != 2) throw std::runtime_error(dir + "/items.tsv: bad line");
      idx->index[fields[0]] = static_cast<long>(idx->ids.size());
      idx->ids.push_back(fields[0]);
    }
  }
  prepared.items = idx;

  std::vector<std::string> codes;
  {
    std::ifstream in(dir + "/markets.tsv");
    if (!in) throw std::runtime_error("cannot read " + dir + "/markets.tsv");
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) codes.push_back(line);
    }
  }

  for (const std::string& code : codes) {
    SplitDataset split;
    split.market_code = code;
    split.n_items_global = idx->size();
    const std::string base = dir + "/" + code;
    {
      std::ifstream in(base + ".users.tsv");
      if (!in) throw std::runtime_error("cannot read " + base + ".users.tsv");
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_fields(line, '\t');
        split.user_ids.push_back(fields[0]);
      }
    }
    split.users.resize(split.user_ids.size());
    read_split_file(base + ".train.tsv", split, "train");
    read_split_file(base + ".valid.tsv", split, "valid");
    read_split_file(base + ".test.tsv", split, "test");

    std::set<long> present;
    for (UserSplit& us : split.users) {
      std::set<long> known;
      for (const Interaction& it : us.train) {
        known.insert(it.item);
        present.insert(it.item);
      }
      known.insert(us.valid.item);
      known.insert(us.test.item);
      present.insert(us.valid.item);
      present.insert(us.test.item);
      us.known_positives.assign(known.begin(), known.end());
    }
    split.items_present.assign(present.begin(), present.end());
    prepared.markets.push_back(std::move(split));
  }
  return prepared;
}

std::string split_fingerprint(const SplitDataset& split) {
  std::ostringstream ss;
  ss << split.market_code << '|' << split.n_items_global << '|' << split.n_users() << '\n';
  for (long u = 0; u < split.n_users(); ++u) {
    const UserSplit& us = split.users[static_cast<size_t>(u)];
    ss << u << ':';
    for (const Interaction& it : us.train) ss << ' ' << it.item << ',' << it.timestamp;
    ss << " |v " << us.valid.item << ',' << us.valid.timestamp;
    ss << " |t " << us.test.item << ',' << us.test.timestamp << '\n';
  }
  return hash_string(ss.str());
}

}  // namespace forec::data
