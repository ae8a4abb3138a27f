#pragma once

// Numeric maximizer of the offloading user's utility on the budget plane
// sum_m c_m r_m = B: equality-constrained Newton iterations with
// backtracking, started from equal spend per node. It never uses the
// closed-form demand.

#include <cmath>
#include <numeric>
#include <vector>

namespace oracle {

inline double user_objective(double a, const std::vector<double>& alpha, const std::vector<double>& beta,
                             const std::vector<double>& c, const std::vector<double>& r) {
  double u = 0.0;
  for (std::size_t m = 0; m < r.size(); ++m) u += a * alpha[m] * std::log(r[m] * beta[m]) - c[m] * r[m];
  return u;
}

inline std::vector<double> numeric_demand(double a, const std::vector<double>& alpha, const std::vector<double>& beta,
                                          const std::vector<double>& c, double B) {
  const std::size_t M = c.size();
  // feasible start: equal spend per node
  std::vector<double> r(M);
  for (std::size_t m = 0; m < M; ++m) r[m] = B / (static_cast<double>(M) * c[m]);
  double f = user_objective(a, alpha, beta, c, r);
  for (int it = 0; it < 1000; ++it) {
    // Hessian is diagonal, h_m = -a alpha_m / r_m^2; the multiplier keeps
    // the step on the plane
    std::vector<double> hinv(M), g(M), d(M);
    for (std::size_t m = 0; m < M; ++m) {
      hinv[m] = r[m] * r[m] / (a * alpha[m]);
      g[m] = a * alpha[m] / r[m] - c[m];
    }
    double num = 0.0, den = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      num += c[m] * hinv[m] * g[m];
      den += c[m] * c[m] * hinv[m];
    }
    const double mu = num / den;
    double norm = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      d[m] = hinv[m] * (g[m] - mu * c[m]);
      norm = std::max(norm, std::abs(d[m]) / r[m]);
    }
    if (norm < 1e-13) break;
    double step = 1.0;
    bool moved = false;
    while (step > 1e-20) {
      std::vector<double> trial(M);
      bool ok = true;
      for (std::size_t m = 0; m < M; ++m) {
        trial[m] = r[m] + step * d[m];
        if (!(trial[m] > 0.0)) ok = false;
      }
      if (ok) {
        const double ft = user_objective(a, alpha, beta, c, trial);
        if (ft >= f) {
          r = trial;
          f = ft;
          moved = true;
          break;
        }
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return r;
}

}  // namespace oracle
