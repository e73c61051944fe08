#include "multitox/errors.hpp"

#include <iostream>

namespace multitox {

namespace {
std::atomic<long> g_warning_count{0};
}

void log_warning(const std::string& msg) {
  ++g_warning_count;
  std::cerr << "[multitox] warning: " << msg << "\n";
}

long warning_count() { return g_warning_count.load(); }

}  // namespace multitox
