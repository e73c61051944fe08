#include "multitox/params.hpp"

#include "multitox/errors.hpp"

namespace multitox {

Tensor ParamRegistry::add(const std::string& name, Tensor t, bool decay) {
  if (!index_.emplace(name, entries_.size()).second) {
    throw ConfigError("params: '" + name + "' registered twice");
  }
  t.set_requires_grad(true);
  entries_.push_back({name, t, decay, false});
  return t;
}

bool ParamRegistry::contains(const std::string& name) const {
  return index_.count(name) > 0;
}

ParamRegistry::Entry& ParamRegistry::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw ConfigError("params: unknown parameter '" + name + "'");
  }
  return entries_[it->second];
}

const ParamRegistry::Entry& ParamRegistry::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw ConfigError("params: unknown parameter '" + name + "'");
  }
  return entries_[it->second];
}

std::size_t ParamRegistry::total_parameters() const {
  std::size_t n = 0;
  for (const Entry& e : entries_) n += e.tensor.numel();
  return n;
}

void ParamRegistry::zero_grad_all() {
  for (Entry& e : entries_) e.tensor.zero_grad();
}

}  // namespace multitox
