#pragma once

// Central finite-difference oracle for scalar functions of parameter Vars.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ecat/autodiff.hpp"

namespace ecat::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "param[i]: analytic vs numeric"
};

/// Relative error with a floor so that two near-zero gradients compare by
/// absolute difference.
inline double rel_error(double a, double n) {
  const double scale = std::max({std::abs(a), std::abs(n), 1e-6});
  return std::abs(a - n) / scale;
}

/// Compares backward() against (f(x+h) - f(x-h)) / 2h for every element of
/// every parameter.
inline GradCheckResult grad_check(const std::function<Var()>& f, std::vector<Var> params, double h = 1e-5) {
  for (auto& p : params) p.drop_grad();
  Var loss = f();
  backward(loss);
  std::vector<Tensor> analytic;
  for (auto& p : params) {
    analytic.push_back(p.has_grad() ? p.grad() : Tensor(p.value().shape(), 0.0));
    p.drop_grad();
  }
  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& x = params[k].mutable_value();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double orig = x[i];
      x[i] = orig + h;
      const double up = f().value().item();
      x[i] = orig - h;
      const double down = f().value().item();
      x[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double err = rel_error(analytic[k][i], numeric);
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = "param " + std::to_string(k) + "[" + std::to_string(i) + "]: " +
                       std::to_string(analytic[k][i]) + " vs " + std::to_string(numeric);
      }
    }
  }
  return result;
}

inline Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t = Tensor::zeros(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

/// sum(x * R): a scalar readout with non-uniform upstream gradient. `r` must
/// be fixed across evaluations.
inline Var readout(const Var& x, const Var& r) { return sum(mul(x, r)); }

}  // namespace ecat::testing
