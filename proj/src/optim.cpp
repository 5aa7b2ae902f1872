#include "vd/optim.hpp"

#include <cmath>

#include "vd/error.hpp"

namespace vd::optim {

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw ContractError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ContractError("Adam betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ContractError("Adam epsilon must be positive");
}

Adam::Adam(AdamConfig cfg, std::vector<std::string> names) : cfg_(cfg), names_(std::move(names)) {
  cfg_.validate();
}

void Adam::step(ag::ParameterStore& store) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const std::string& name : names_) {
    ag::Node& p = store.at(name);
    const ag::Array g = p.grad();
    auto [it, fresh] = slots_.try_emplace(name);
    AdamSlot& s = it->second;
    if (fresh) {
      s.m = ag::Array(p.shape());
      s.v = ag::Array(p.shape());
    }
    ag::Array& x = p.mutable_value();
    for (std::size_t i = 0; i < x.size(); ++i) {
      s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g[i];
      s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      x[i] -= cfg_.lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + cfg_.eps);
    }
  }
}

void Adam::restore(std::int64_t t, std::map<std::string, AdamSlot> slots) {
  if (t < 0) throw ContractError("Adam step count must be nonnegative");
  t_ = t;
  slots_ = std::move(slots);
}

}  // namespace vd::optim
