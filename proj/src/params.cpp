#include "forec/params.hpp"

#include <stdexcept>

namespace forec::ad {

void ParamSet::add(std::string name, Tensor value, bool frozen) {
  if (contains(name)) throw std::invalid_argument("ParamSet: duplicate name " + name);
  entries_.push_back({std::move(name), std::move(value), frozen});
}

void ParamSet::remove(const std::string& name) {
  entries_.erase(entries_.begin() + static_cast<long>(index_of(name)));
}

bool ParamSet::contains(const std::string& name) const {
  for (const Entry& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

const Tensor& ParamSet::value(const std::string& name) const {
  return entries_[index_of(name)].value;
}

bool ParamSet::frozen(const std::string& name) const {
  return entries_[index_of(name)].frozen;
}

void ParamSet::set_value(const std::string& name, Tensor value) {
  Entry& e = entries_[index_of(name)];
  if (e.frozen) throw std::invalid_argument("ParamSet: entry is frozen: " + name);
  if (!e.value.same_shape(value)) {
    throw std::invalid_argument("ParamSet: shape change for " + name);
  }
  e.value = std::move(value);
}

void ParamSet::set_frozen(const std::string& name, bool frozen) {
  entries_[index_of(name)].frozen = frozen;
}

long ParamSet::total_elements() const {
  long n = 0;
  for (const Entry& e : entries_) n += e.value.size();
  return n;
}

bool ParamSet::bits_equal(const ParamSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (size_t i = 0; i < entries_.size(); ++i) {
    const Entry& a = entries_[i];
    const Entry& b = other.entries_[i];
    if (a.name != b.name || a.frozen != b.frozen || !a.value.bits_equal(b.value)) {
      return false;
    }
  }
  return true;
}

size_t ParamSet::index_of(const std::string& name) const {
  for (size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  throw std::invalid_argument("ParamSet: unknown name " + name);
}

}  // namespace forec::ad
