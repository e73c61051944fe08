#ifndef MULTITOX_PARAMS_HPP
#define MULTITOX_PARAMS_HPP

#include <map>
#include <string>
#include <vector>

#include "multitox/tensor.hpp"

namespace multitox {

// Flat, ordered registry of trainable tensors.  Registration order is the
// checkpoint layout, so it must be deterministic.
class ParamRegistry {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    bool decay = true;    // weight decay applies
    bool frozen = false;  // excluded from optimizer updates
  };

  // Marks the tensor as requires_grad and returns it.
  Tensor add(const std::string& name, Tensor t, bool decay = true);

  bool contains(const std::string& name) const;
  Entry& at(const std::string& name);
  const Entry& at(const std::string& name) const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  std::size_t size() const { return entries_.size(); }
  std::size_t total_parameters() const;

  void zero_grad_all();

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace multitox

#endif
