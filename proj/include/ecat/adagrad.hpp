#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ecat/autodiff.hpp"

namespace ecat {

struct NamedParam {
  std::string name;
  Var var;
};

using ParamList = std::vector<NamedParam>;

/// FNV-1a over names, shapes and raw value bytes, in list order.
std::uint64_t hash_parameters(const ParamList& params);

struct AdagradConfig {
  double learning_rate = 0.01;
  double accumulator_decay = 0.9999;
  double epsilon = 1e-8;
  double initial_accumulator = 0.0;
};

/// Adagrad with a decaying squared-gradient accumulator:
///   acc <- decay * acc + g^2
///   theta <- theta - lr * g / (sqrt(acc) + eps)
/// decay = 1 is plain Adagrad.
class Adagrad {
 public:
  Adagrad(ParamList params, AdagradConfig config);

  /// Applies one update from the parameters' accumulated gradients and clears
  /// them. Parameters that received no gradient still decay their
  /// accumulator. Throws NumericError naming the parameter on a NaN/Inf
  /// gradient, before any parameter is modified.
  void step();
  void zero_grad();

  const AdagradConfig& config() const { return config_; }
  const ParamList& params() const { return params_; }
  const std::vector<Tensor>& accumulators() const { return accumulators_; }
  std::vector<Tensor>& accumulators() { return accumulators_; }

 private:
  ParamList params_;
  AdagradConfig config_;
  std::vector<Tensor> accumulators_;
};

}  // namespace ecat
