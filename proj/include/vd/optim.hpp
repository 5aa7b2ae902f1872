#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vd/tensor.hpp"

namespace vd::optim {

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

struct AdamSlot {
  ag::Array m;
  ag::Array v;
};

// Bias-corrected Adam over a named subset of a ParameterStore. Only the
// names passed at construction are ever written.
class Adam {
 public:
  Adam(AdamConfig cfg, std::vector<std::string> names);

  const AdamConfig& config() const { return cfg_; }
  const std::vector<std::string>& names() const { return names_; }
  std::int64_t steps() const { return t_; }

  // One update from the gradients currently held by the store.
  void step(ag::ParameterStore& store);

  const std::map<std::string, AdamSlot>& slots() const { return slots_; }
  void restore(std::int64_t t, std::map<std::string, AdamSlot> slots);

 private:
  AdamConfig cfg_;
  std::vector<std::string> names_;
  std::int64_t t_ = 0;
  std::map<std::string, AdamSlot> slots_;
};

}  // namespace vd::optim
