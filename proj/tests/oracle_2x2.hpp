#pragma once

// Fixed 2x2 corpus and scalar re-derivations of the iterative-reasoning
// recursions. Everything here works on p = P(row plays 0) and
// q = P(column plays 0) and never calls into the library's models.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "bgt/game.hpp"

namespace oracle {

struct Game2x2 {
  std::string name;
  std::array<double, 4> row;  // row[a * 2 + b]
  std::array<double, 4> col;
  bgt::NormalFormGame game() const {
    return bgt::NormalFormGame::bimatrix(2, 2, {row.begin(), row.end()}, {col.begin(), col.end()});
  }
};

inline std::vector<Game2x2> corpus() {
  return {
      {"prisoners_dilemma", {3, 0, 5, 1}, {3, 5, 0, 1}},
      {"matching_pennies", {1, -1, -1, 1}, {-1, 1, 1, -1}},
      {"asymmetric_cycle", {4, 1, 2, 3}, {1, 3, 4, 0}},
      {"battle_of_sexes", {3, 0, 0, 2}, {2, 0, 0, 3}},
      {"row_dominant", {2, 5, 1, 3}, {0, 2, 3, 1}},
  };
}

// Row action utilities against q, column action utilities against p.
inline std::array<double, 2> row_eu(const Game2x2& g, double q) {
  return {g.row[0] * q + g.row[1] * (1 - q), g.row[2] * q + g.row[3] * (1 - q)};
}
inline std::array<double, 2> col_eu(const Game2x2& g, double p) {
  return {g.col[0] * p + g.col[2] * (1 - p), g.col[1] * p + g.col[3] * (1 - p)};
}

inline double exact_br(std::array<double, 2> u) {
  if (std::abs(u[0] - u[1]) <= 1e-9) return 0.5;
  return u[0] > u[1] ? 1.0 : 0.0;
}

inline double logit(std::array<double, 2> u, double lambda) {
  return 1.0 / (1.0 + std::exp(lambda * (u[1] - u[0])));
}

// lambda < 0 selects exact best response.
inline double respond(std::array<double, 2> u, double lambda) {
  return lambda < 0 ? exact_br(u) : logit(u, lambda);
}

struct PQ {
  double p;
  double q;
};

// Level k responds to level k-1; level 0 is (p0, q0).
inline std::vector<PQ> level_k(const Game2x2& g, int k_max, double lambda, PQ level0 = {0.5, 0.5}) {
  std::vector<PQ> lv{level0};
  for (int k = 1; k <= k_max; ++k) {
    const PQ prev = lv.back();
    lv.push_back({respond(row_eu(g, prev.q), lambda), respond(col_eu(g, prev.p), lambda)});
  }
  return lv;
}

// Level k responds to the Poisson(tau) mixture of levels 0..k-1,
// renormalized over those levels.
inline std::vector<PQ> cognitive_hierarchy(const Game2x2& g, int k_max, double tau, double lambda) {
  std::vector<double> f;
  for (int h = 0; h <= k_max; ++h) f.push_back(std::pow(tau, h) * std::exp(-tau) / std::tgamma(h + 1.0));
  std::vector<PQ> lv{{0.5, 0.5}};
  for (int k = 1; k <= k_max; ++k) {
    double mass = 0, bp = 0, bq = 0;
    for (int h = 0; h < k; ++h) {
      mass += f[h];
      bp += f[h] * lv[h].p;
      bq += f[h] * lv[h].q;
    }
    lv.push_back({respond(row_eu(g, bq / mass), lambda), respond(col_eu(g, bp / mass), lambda)});
  }
  return lv;
}

// Depth `depth` is uniform; depth d answers depth d+1 with lambda0*decay^d.
inline PQ noisy_introspection(const Game2x2& g, double lambda0, double decay, int depth) {
  PQ cur{0.5, 0.5};
  for (int d = depth - 1; d >= 0; --d) {
    const double lam = lambda0 * std::pow(decay, d);
    cur = PQ{logit(row_eu(g, cur.q), lam), logit(col_eu(g, cur.p), lam)};
  }
  return cur;
}

// Sup-norm distance between (p, q) and its logit image.
inline double qbr_residual(const Game2x2& g, double lambda, PQ s) {
  const double p = logit(row_eu(g, s.q), lambda);
  const double q = logit(col_eu(g, s.p), lambda);
  return std::max(std::abs(p - s.p), std::abs(q - s.q));
}

// Logit equilibrium by bisection on p -> logit(row_eu(logit(col_eu(p)))) - p.
// Only meaningful when that map has a single crossing; returns NaN otherwise.
inline PQ qre_by_bisection(const Game2x2& g, double lambda) {
  auto h = [&](double p) { return logit(row_eu(g, logit(col_eu(g, p), lambda)), lambda) - p; };
  int crossings = 0;
  double lo = 0.0, hi = 1.0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    const double a = double(i) / n, b = double(i + 1) / n;
    if ((h(a) < 0) != (h(b) < 0)) {
      ++crossings;
      lo = a;
      hi = b;
    }
  }
  if (crossings != 1) return {NAN, NAN};
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if ((h(mid) < 0) == (h(lo) < 0)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double p = 0.5 * (lo + hi);
  return {p, logit(col_eu(g, p), lambda)};
}

}  // namespace oracle
