#pragma once

// Central finite-difference gradient oracle. Independent of the autodiff
// path: numeric gradients re-run the forward function with no tape
// installed.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "rlns/ops.hpp"
#include "rlns/tensor.hpp"

namespace rlns::testing {

// Builds a scalar loss from the inputs. Called twice per perturbed element
// with recording disabled, once with recording enabled.
using LossFn = std::function<Tensor(const std::vector<Tensor>&)>;

struct GradCheckResult {
  double max_rel_err = 0.0;
  size_t checked = 0;
};

inline double rel_err(double analytic, double numeric) {
  const double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
  return std::fabs(analytic - numeric) / denom;
}

inline GradCheckResult grad_check(std::vector<Tensor> inputs, const LossFn& f, double h = 1e-6) {
  for (auto& t : inputs) t.set_requires_grad(true);
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = f(inputs);
    tape.backward(loss);
  }
  GradCheckResult res;
  for (auto& t : inputs) {
    auto data = t.data();
    const auto grad = t.grad();
    for (size_t i = 0; i < data.size(); ++i) {
      const double keep = data[i];
      data[i] = keep + h;
      const double up = f(inputs).item();
      data[i] = keep - h;
      const double down = f(inputs).item();
      data[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = grad.empty() ? 0.0 : grad[i];
      res.max_rel_err = std::max(res.max_rel_err, rel_err(analytic, numeric));
      ++res.checked;
    }
    t.zero_grad();
    t.set_requires_grad(false);
  }
  return res;
}

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> d(static_cast<size_t>(shape_numel(shape)));
  for (double& v : d) {
    const double u = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
    v = lo + (hi - lo) * u;
  }
  return Tensor(std::move(shape), std::move(d));
}

// Mixes a tensor-valued op output into a scalar via fixed weights. The
// weights must be created once outside the LossFn and captured, so the
// analytic and finite-difference evaluations see the same loss.
inline Tensor weighted_sum(const Tensor& out, const Tensor& weights) { return sum_all(mul(out, weights)); }

}  // namespace rlns::testing
