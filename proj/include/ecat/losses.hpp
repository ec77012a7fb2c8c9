#pragma once

// Loss terms of the combined objective
//   L = w_da * L_y + alpha * w_pow * L_di + beta * L_da
// with the per-sample weights w_da and w_pow applied inside the means of
// L_y and L_di and treated as constants.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ecat/autodiff.hpp"
#include "ecat/datagen.hpp"

namespace ecat {

struct LossWeights {
  double alpha = 0.5;
  double beta = 1.0;

  void validate() const;
};

/// Sink for warnings raised inside loss computation (default: stderr).
using WarningSink = std::function<void(const std::string&)>;
void set_warning_sink(WarningSink sink);
void warn(const std::string& message);

/// sum_i w_i * BCE(p_i, y_i) / n over the whole mixed batch.
Var loss_y(const Var& preds, std::span<const double> labels, std::span<const double> w_da);

/// Admission weight of one sample: 1 for target-domain samples, normalised
/// discriminator entropy H(p)/ln 2 for transferred ones.
double da_sample_weight(double domain_prob, Domain domain);
std::vector<double> da_sample_weights(const Tensor& domain_probs, std::span<const Domain> domains);

/// mean_i w_pow_i * (1 - cos(e'_i, e_s_i)).
Var loss_di(const Var& adapted, const Var& e_seq_s, std::span<const double> w_pow);

/// Mean BCE of the discriminator against domain labels (1 = target). A
/// single-class batch is allowed and reported through warn().
Var loss_da(const Var& domain_probs, std::span<const double> domain_labels);

struct BatchLossBreakdown {
  double l_y = 0.0;
  double l_di = 0.0;
  double l_da = 0.0;
  double l_total = 0.0;
  std::vector<double> w_da;
  std::vector<double> w_pow;
};

struct ComposedLoss {
  Var total;
  BatchLossBreakdown breakdown;
};

/// total = l_y + alpha * l_di + beta * l_da. Throws ConfigError on negative
/// weights. Zero-weighted terms may be passed as empty Vars.
ComposedLoss loss_ecat(const Var& l_y, const Var& l_di, const Var& l_da, const LossWeights& weights,
                       std::vector<double> w_da = {}, std::vector<double> w_pow = {});

}  // namespace ecat
