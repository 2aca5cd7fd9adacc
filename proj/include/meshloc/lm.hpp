#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace meshloc {

struct LmOptions {
  int max_iterations = 50;
  double relative_cost_tolerance = 1e-10;
  double initial_lambda = 1e-3;
};

template <typename Params>
struct LmResult {
  Params params;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
};

// Levenberg-Marquardt over an N-dimensional tangent space.
//
// `problem` must provide
//   double evaluate(const Params&, Hessian* h, Gradient* g) const
// returning the cost and, when h/g are non-null, the Gauss-Newton normal
// equations (J^T W J, J^T W r), and
//   Params retract(const Params&, const Gradient& delta) const.
// Steps are only accepted when they lower the cost, so the returned cost is
// never above the initial one.
template <int N, typename Params, typename Problem>
LmResult<Params> levenberg_marquardt(const Problem& problem, Params x, const LmOptions& opts = {}) {
  using Hessian = Eigen::Matrix<double, N, N>;
  using Gradient = Eigen::Matrix<double, N, 1>;

  Hessian h;
  Gradient g;
  double cost = problem.evaluate(x, &h, &g);
  LmResult<Params> result{x, cost, cost, 0};
  if (!std::isfinite(cost)) return result;

  double lambda = opts.initial_lambda;
  for (int it = 0; it < opts.max_iterations; ++it) {
    result.iterations = it + 1;
    if (cost == 0.0) break;
    Hessian damped = h;
    for (int i = 0; i < N; ++i) damped(i, i) += lambda * std::max(h(i, i), 1e-12);
    const Gradient delta = damped.ldlt().solve(-g);
    if (!delta.allFinite()) {
      lambda *= 10.0;
      if (lambda > 1e16) break;
      continue;
    }
    const Params candidate = problem.retract(x, delta);
    const double new_cost = problem.evaluate(candidate, nullptr, nullptr);
    if (std::isfinite(new_cost) && new_cost < cost) {
      const double rel = (cost - new_cost) / cost;
      x = candidate;
      cost = new_cost;
      lambda = std::max(lambda * 0.1, 1e-12);
      if (rel < opts.relative_cost_tolerance) break;
      problem.evaluate(x, &h, &g);
    } else {
      lambda *= 10.0;
      if (lambda > 1e16) break;
    }
  }
  result.params = x;
  result.final_cost = cost;
  return result;
}

}  // namespace meshloc
