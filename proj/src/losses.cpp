#include "ecat/losses.hpp"

#include <cmath>
#include <iostream>
#include <numbers>

namespace ecat {

namespace {
WarningSink& sink() {
  static WarningSink s = [](const std::string& m) { std::cerr << "warning: " << m << '\n'; };
  return s;
}

Var column(std::span<const double> values) {
  return Var::constant(Tensor({values.size(), 1}, std::vector<double>(values.begin(), values.end())));
}
}  // namespace

void set_warning_sink(WarningSink s) { sink() = std::move(s); }
void warn(const std::string& message) {
  if (sink()) sink()(message);
}

void LossWeights::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
    throw ConfigError("loss weights alpha and beta must be finite and >= 0");
  }
}

Var loss_y(const Var& preds, std::span<const double> labels, std::span<const double> w_da) {
  const std::size_t n = preds.value().rows();
  if (labels.size() != n || w_da.size() != n) {
    throw DimensionError("loss_y: " + std::to_string(n) + " predictions, " + std::to_string(labels.size()) +
                         " labels, " + std::to_string(w_da.size()) + " weights");
  }
  for (double w : w_da) {
    if (!(w >= 0.0 && w <= 1.0)) throw ContractError("loss_y: sample weight " + std::to_string(w) + " outside [0,1]");
  }
  Var bce = binary_cross_entropy(preds, labels);
  return divide(sum(mul(bce, column(w_da))), static_cast<double>(n));
}

double da_sample_weight(double domain_prob, Domain domain) {
  if (domain == Domain::target) return 1.0;
  return entropy_binary(std::clamp(domain_prob, 0.0, 1.0)) / std::numbers::ln2;
}

std::vector<double> da_sample_weights(const Tensor& domain_probs, std::span<const Domain> domains) {
  if (domain_probs.size() != domains.size()) throw DimensionError("da_sample_weights: length mismatch");
  std::vector<double> w(domains.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::min(1.0, da_sample_weight(domain_probs[i], domains[i]));
  return w;
}

Var loss_di(const Var& adapted, const Var& e_seq_s, std::span<const double> w_pow) {
  const std::size_t n = adapted.value().rows();
  if (w_pow.size() != n) throw DimensionError("loss_di: intensity count does not match batch");
  Var distance = add_scalar(scale(cosine_similarity(adapted, e_seq_s), -1.0), 1.0);
  return divide(sum(mul(distance, column(w_pow))), static_cast<double>(n));
}

Var loss_da(const Var& domain_probs, std::span<const double> domain_labels) {
  std::size_t positives = 0;
  for (double y : domain_labels) positives += y == 1.0;
  if (positives == 0 || positives == domain_labels.size()) {
    warn("loss_da: single-class domain batch (" + std::to_string(positives) + " target of " +
         std::to_string(domain_labels.size()) + ")");
  }
  Var bce = binary_cross_entropy(domain_probs, domain_labels);
  return divide(sum(bce), static_cast<double>(domain_labels.size()));
}

ComposedLoss loss_ecat(const Var& l_y, const Var& l_di, const Var& l_da, const LossWeights& weights,
                       std::vector<double> w_da, std::vector<double> w_pow) {
  weights.validate();
  ComposedLoss out;
  auto& b = out.breakdown;
  b.l_y = l_y.value().item();
  b.l_di = l_di ? l_di.value().item() : 0.0;
  b.l_da = l_da ? l_da.value().item() : 0.0;
  out.total = l_y;
  if (l_di && weights.alpha != 0.0) out.total = add(out.total, scale(l_di, weights.alpha));
  if (l_da && weights.beta != 0.0) out.total = add(out.total, scale(l_da, weights.beta));
  b.l_total = out.total.value().item();
  b.w_da = std::move(w_da);
  b.w_pow = std::move(w_pow);
  const double expected = b.l_y + weights.alpha * b.l_di + weights.beta * b.l_da;
  if (std::abs(expected - b.l_total) > 1e-12 * std::max(1.0, std::abs(expected))) {
    throw NumericError("loss breakdown does not compose");
  }
  return out;
}

}  // namespace ecat
