#pragma once

#include <string>
#include <vector>

#include "forec/tensor.hpp"

namespace forec::ad {

// Named, ordered collection of tensors with per-entry freeze flags.
// Iteration order is insertion order, which makes checkpoints and
// gradient maps reproducible. Frozen entries reject value updates.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    bool frozen = false;
  };

  void add(std::string name, Tensor value, bool frozen = false);
  void remove(const std::string& name);

  bool contains(const std::string& name) const;
  const Tensor& value(const std::string& name) const;
  bool frozen(const std::string& name) const;

  void set_value(const std::string& name, Tensor value);
  void set_frozen(const std::string& name, bool frozen);

  const std::vector<Entry>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }
  long total_elements() const;

  // True when both sets have identical names, flags, shapes and bits.
  bool bits_equal(const ParamSet& other) const;

 private:
  size_t index_of(const std::string& name) const;

  std::vector<Entry> entries_;
};

}  // namespace forec::ad
