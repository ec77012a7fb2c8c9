#include "ecat/adagrad.hpp"

#include <cmath>
#include <cstring>

namespace ecat {

std::uint64_t hash_parameters(const ParamList& params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& p : params) {
    mix(p.name.data(), p.name.size());
    for (auto dim : p.var.value().shape()) mix(&dim, sizeof(dim));
    auto values = p.var.value().data();
    mix(values.data(), values.size() * sizeof(double));
  }
  return h;
}

Adagrad::Adagrad(ParamList params, AdagradConfig config) : params_(std::move(params)), config_(config) {
  if (!(config_.learning_rate > 0.0)) throw ConfigError("adagrad: learning_rate must be > 0");
  if (!(config_.accumulator_decay > 0.0 && config_.accumulator_decay <= 1.0)) {
    throw ConfigError("adagrad: accumulator_decay must lie in (0, 1]");
  }
  if (!(config_.epsilon > 0.0)) throw ConfigError("adagrad: epsilon must be > 0");
  if (config_.initial_accumulator < 0.0) throw ConfigError("adagrad: initial_accumulator must be >= 0");
  accumulators_.reserve(params_.size());
  for (const auto& p : params_) {
    if (!p.var.is_leaf() || !p.var.requires_grad()) {
      throw ContractError("adagrad: '" + p.name + "' is not a trainable leaf");
    }
    accumulators_.emplace_back(p.var.value().shape(), config_.initial_accumulator);
  }
}

void Adagrad::step() {
  for (const auto& p : params_) {
    if (p.var.has_grad() && !p.var.grad().all_finite()) {
      throw NumericError("adagrad: non-finite gradient for parameter '" + p.name + "'");
    }
  }
  const double lr = config_.learning_rate;
  const double decay = config_.accumulator_decay;
  const double eps = config_.epsilon;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Var& v = params_[k].var;
    auto acc = accumulators_[k].data();
    if (!v.has_grad()) {
      if (decay != 1.0) {
        for (auto& a : acc) a = decay * a;
      }
      continue;
    }
    auto theta = v.mutable_value().data();
    auto g = v.grad().data();
    for (std::size_t i = 0; i < acc.size(); ++i) {
      acc[i] = decay * acc[i] + g[i] * g[i];
      theta[i] = theta[i] - lr * g[i] / (std::sqrt(acc[i]) + eps);
    }
    v.drop_grad();
  }
}

void Adagrad::zero_grad() {
  for (auto& p : params_) p.var.drop_grad();
}

}  // namespace ecat
