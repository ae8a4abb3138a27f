#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bgt/error.hpp"

namespace bgt::fog {

// One offloading user buying divisible task shares from M fog nodes.
//
//   user utility   a * sum_m alpha_m log(r_m beta_m) - sum_m c_m r_m
//   fog gain       kappa_m (c_m - c_lower_m) r_m
//   budget         sum_m c_m r_m = B
struct FogScenario {
  std::size_t M = 4;
  double a = 1.0;
  std::vector<double> alpha;
  std::vector<double> beta;
  std::vector<double> c_lower;
  std::vector<double> kappa;
  double B = 10.0;
  std::vector<double> c_init;
  std::vector<double> c_max;
  double eta = 20.0;          // price step size
  double noise_rho = 0.0;     // multiplicative uniform noise amplitude
  bool averaging = false;     // act on the running mean of own best responses
  std::size_t averaging_window = 0;  // 0: cumulative mean over all rounds
  std::size_t max_rounds = 2000;
  double conv_tol = 1e-4;
  std::size_t conv_window = 20;
  // Secant slopes are only trusted when consecutive prices differ by more
  // than this fraction of the current price.
  double min_secant_step = 1e-2;

  bool operator==(const FogScenario&) const = default;
};

enum class PriceRule { FocRoot, GradientAscent };

inline constexpr double kDemandFloor = 1e-9;

// Heterogeneous 4-node scenario used by the shipped configs and the
// acceptance suite.
inline FogScenario default_scenario() {
  FogScenario s;
  s.M = 4;
  s.alpha = {1.0, 0.8, 0.6, 0.4};
  s.beta = {1.0, 1.0, 1.0, 1.0};
  s.c_lower = {1.0, 1.2, 0.8, 1.5};
  s.kappa = {1.0, 0.9, 0.8, 0.7};
  s.c_init = s.c_lower;
  s.c_max.resize(4);
  std::transform(s.c_lower.begin(), s.c_lower.end(), s.c_max.begin(), [](double c) { return 10.0 * c; });
  return s;
}

// Homogeneous defaults for an arbitrary node count.
inline FogScenario uniform_scenario(std::size_t M, double B) {
  FogScenario s;
  s.M = M;
  s.B = B;
  s.alpha.assign(M, 1.0);
  s.beta.assign(M, 1.0);
  s.c_lower.assign(M, 1.0);
  s.kappa.assign(M, 1.0);
  s.c_init.assign(M, 1.0);
  s.c_max.assign(M, 10.0);
  return s;
}

// Throws ValidationError naming the offending key.
inline void validate(const FogScenario& s) {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ValidationError(key + ": " + why, key);
  };
  if (s.M == 0) fail("M", "must be positive");
  const std::pair<const char*, const std::vector<double>*> vecs[] = {
      {"alpha", &s.alpha}, {"beta", &s.beta},     {"c_lower", &s.c_lower},
      {"kappa", &s.kappa}, {"c_init", &s.c_init}, {"c_max", &s.c_max}};
  for (const auto& [key, v] : vecs) {
    if (v->size() != s.M) fail(key, "must have length M");
    for (double x : *v) {
      if (!std::isfinite(x)) fail(key, "entries must be finite");
    }
  }
  if (!(s.a > 0.0) || !std::isfinite(s.a)) fail("a", "must be positive");
  if (!(s.B > 0.0) || !std::isfinite(s.B)) fail("B", "must be positive");
  for (std::size_t m = 0; m < s.M; ++m) {
    if (!(s.alpha[m] > 0.0)) fail("alpha", "entries must be positive");
    if (!(s.beta[m] > 0.0)) fail("beta", "entries must be positive");
    if (!(s.c_lower[m] > 0.0)) fail("c_lower", "entries must be positive");
    if (!(s.kappa[m] > 0.0 && s.kappa[m] <= 1.0)) fail("kappa", "entries must lie in (0,1]");
    if (!(s.c_max[m] > s.c_lower[m])) fail("c_max", "must exceed c_lower");
    if (!(s.c_init[m] >= s.c_lower[m])) fail("c_init", "must be >= c_lower");
    if (!(s.c_init[m] <= s.c_max[m])) fail("c_init", "must be <= c_max");
  }
  if (!(s.eta > 0.0) || !std::isfinite(s.eta)) fail("eta", "must be positive");
  if (!(s.noise_rho >= 0.0 && s.noise_rho < 1.0)) fail("noise_rho", "must lie in [0,1)");
  if (s.max_rounds == 0) fail("max_rounds", "must be positive");
  if (!(s.conv_tol > 0.0)) fail("conv_tol", "must be positive");
  if (s.conv_window < 2) fail("conv_window", "must be >= 2");
  if (!(s.min_secant_step >= 0.0)) fail("min_secant_step", "must be >= 0");
}

// ---------------------------------------------------------------------------
// Utilities

inline double user_utility(const FogScenario& s, std::span<const double> r, std::span<const double> c) {
  if (r.size() != s.M || c.size() != s.M) throw InvalidArgument("demand and price vectors need length M");
  double log_term = 0.0;
  double cost = 0.0;
  for (std::size_t m = 0; m < s.M; ++m) {
    if (!(r[m] > 0.0)) throw DomainError("user utility needs strictly positive demands");
    log_term += s.alpha[m] * std::log(r[m] * s.beta[m]);
    cost += c[m] * r[m];
  }
  return s.a * log_term - cost;
}

inline double fog_gain(const FogScenario& s, std::size_t m, double c_m, double r_m) {
  if (m >= s.M) throw InvalidArgument("fog node index out of range");
  if (c_m < s.c_lower[m]) throw InvalidPrice("price below the node's unit cost");
  return s.kappa[m] * (c_m * r_m - s.c_lower[m] * r_m);
}

// Budget-exhausting maximizer of the user utility: r_m = B alpha_m / (c_m sum alpha).
inline std::vector<double> optimal_demand(const FogScenario& s, std::span<const double> c) {
  if (c.size() != s.M) throw InvalidArgument("price vector needs length M");
  const double alpha_sum = std::accumulate(s.alpha.begin(), s.alpha.end(), 0.0);
  std::vector<double> r(s.M);
  for (std::size_t m = 0; m < s.M; ++m) {
    if (!(c[m] > 0.0)) throw InvalidArgument("prices must be positive");
    r[m] = s.B * s.alpha[m] / (c[m] * alpha_sum);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Pricing

struct PriceObservation {
  double price = 0.0;
  double demand = 0.0;
};

// First sign change of f on [lo, hi], refined by bisection.
inline std::optional<double> find_sign_change(const std::function<double(double)>& f, double lo,
                                              double hi, std::size_t intervals = 512) {
  double x0 = lo;
  double f0 = f(x0);
  if (f0 == 0.0) return x0;
  for (std::size_t k = 1; k <= intervals; ++k) {
    const double x1 = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(intervals);
    const double f1 = f(x1);
    if (f1 == 0.0) return x1;
    if ((f0 < 0.0) != (f1 < 0.0)) {
      double a = x0, b = x1, fa = f0;
      for (int it = 0; it < 200 && b - a > 1e-13 * std::max(1.0, std::abs(b)); ++it) {
        const double mid = 0.5 * (a + b);
        const double fm = f(mid);
        if ((fm < 0.0) == (fa < 0.0)) {
          a = mid;
          fa = fm;
        } else {
          b = mid;
        }
      }
      return 0.5 * (a + b);
    }
    x0 = x1;
    f0 = f1;
  }
  return std::nullopt;
}

namespace detail {

inline double foc_root_price(const FogScenario& s, std::size_t m) {
  const double alpha_sum = std::accumulate(s.alpha.begin(), s.alpha.end(), 0.0);
  const double share = s.B * s.alpha[m] / alpha_sum;
  const double kappa = s.kappa[m];
  const double cl = s.c_lower[m];
  // r*(c) = share / c, dr*/dc = -share / c^2
  auto foc = [&](double c) { return share / c + kappa * (c - cl) * (-share / (c * c)); };
  if (auto root = find_sign_change(foc, s.c_lower[m], s.c_max[m])) return *root;
  auto gain_at = [&](double c) { return fog_gain(s, m, c, share / c); };
  return gain_at(s.c_max[m]) >= gain_at(s.c_lower[m]) ? s.c_max[m] : s.c_lower[m];
}

}  // namespace detail

// Next price of node m given its observed (price, demand) history.
//
// FocRoot solves r* + kappa (c - c_lower) dr*/dc = 0 on [c_lower, c_max]
// under the closed-form demand and falls back to the gain-maximizing
// boundary when there is no root. GradientAscent takes a projected step
// along a secant estimate of the gain slope from the last two observations;
// when the two prices are too close for a meaningful secant it uses the
// fixed-demand sensitivity kappa * r.
inline double price_update(const FogScenario& s, std::size_t m, std::span<const PriceObservation> history,
                           PriceRule rule) {
  if (m >= s.M) throw InvalidArgument("fog node index out of range");
  if (history.empty()) throw InvalidArgument("price_update needs at least one observation");
  const double lo = s.c_lower[m];
  const double hi = s.c_max[m];
  if (rule == PriceRule::FocRoot) return std::clamp(detail::foc_root_price(s, m), lo, hi);

  const PriceObservation& cur = history.back();
  if (history.size() == 1) return std::clamp(cur.price + s.eta * lo, lo, hi);
  const PriceObservation& prev = history[history.size() - 2];
  const double dc = cur.price - prev.price;
  double slope;
  if (std::abs(dc) > s.min_secant_step * std::abs(cur.price)) {
    slope = (fog_gain(s, m, cur.price, cur.demand) - fog_gain(s, m, prev.price, prev.demand)) / dc;
  } else {
    slope = s.kappa[m] * cur.demand;
  }
  return std::clamp(cur.price + s.eta * slope, lo, hi);
}

// ---------------------------------------------------------------------------
// Noise and averaging

using Rng = std::mt19937_64;

// Uniform double in [0,1) from the top 53 bits; identical on every platform.
inline double unit_uniform(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// value * (1 + u), u ~ U[-rho, rho]. Draws nothing when rho is zero.
inline double inject_noise(double value, double rho, Rng& rng) {
  if (!(rho >= 0.0 && rho < 1.0)) throw InvalidArgument("noise rho must lie in [0,1)");
  if (rho == 0.0) return value;
  const double u = rho * (2.0 * unit_uniform(rng) - 1.0);
  return value * (1.0 + u);
}

inline double signal_average(std::span<const double> history) {
  if (history.empty()) throw InvalidArgument("signal_average needs a nonempty history");
  return std::accumulate(history.begin(), history.end(), 0.0) / static_cast<double>(history.size());
}

// Incremental form of signal_average. A nonzero window keeps only the most
// recent entries.
class SignalAverager {
 public:
  explicit SignalAverager(std::size_t window = 0) : window_(window) {}

  double push(double x) {
    if (window_ == 0) {
      sum_ += x;
      ++count_;
      return sum_ / static_cast<double>(count_);
    }
    recent_.push_back(x);
    if (recent_.size() > window_) recent_.pop_front();
    return signal_average(std::vector<double>(recent_.begin(), recent_.end()));
  }

 private:
  std::size_t window_;
  double sum_ = 0.0;
  std::size_t count_ = 0;
  std::deque<double> recent_;
};

// ---------------------------------------------------------------------------
// Negotiation

struct RoundState {
  std::size_t round = 0;
  std::vector<double> prices;
  std::vector<double> demands;          // executed (after noise/averaging)
  std::vector<double> planned_demands;  // noise-free best response to `prices`
  double user_utility = 0.0;
  std::vector<double> fog_gains;
  double spend = 0.0;  // sum c_m r_m; exceeds B by up to rho under noise
};

struct NegotiationTrace {
  FogScenario scenario;
  PriceRule rule = PriceRule::GradientAscent;
  std::uint64_t seed = 0;
  std::vector<RoundState> rounds;
  bool converged = false;
  std::optional<std::size_t> convergence_round;
};

struct ConvergenceVerdict {
  bool converged = false;
  std::optional<std::size_t> round;
};

namespace detail {

inline bool relative_change_below(std::span<const double> prev, std::span<const double> cur, double tol) {
  for (std::size_t i = 0; i < cur.size(); ++i) {
    const double denom = std::max(std::abs(prev[i]), 1e-300);
    if (!(std::abs(cur[i] - prev[i]) / denom < tol)) return false;
  }
  return true;
}

inline bool round_settled(const RoundState& prev, const RoundState& cur, double tol) {
  return relative_change_below(prev.prices, cur.prices, tol) &&
         relative_change_below(prev.demands, cur.demands, tol);
}

}  // namespace detail

// First round t such that rounds t-window+1..t each changed every price and
// demand by less than conv_tol relative to the previous round.
inline ConvergenceVerdict detect_convergence(std::span<const RoundState> rounds, double conv_tol,
                                             std::size_t conv_window) {
  if (conv_window < 2) throw InvalidArgument("convergence window must be >= 2");
  std::size_t streak = 0;
  for (std::size_t t = 1; t < rounds.size(); ++t) {
    streak = detail::round_settled(rounds[t - 1], rounds[t], conv_tol) ? streak + 1 : 0;
    if (streak >= conv_window) return {true, t};
  }
  return {};
}

// Runs the price/demand negotiation until convergence or max_rounds. Each
// round the user best-responds to the announced prices, then every node
// adapts its price. Noise perturbs each best response; with averaging the
// executed action is the mean of the actor's noisy best responses so far.
inline NegotiationTrace run_negotiation(const FogScenario& s, PriceRule rule, std::uint64_t seed) {
  validate(s);
  NegotiationTrace trace;
  trace.scenario = s;
  trace.rule = rule;
  trace.seed = seed;
  trace.rounds.reserve(std::min<std::size_t>(s.max_rounds, 4096));

  Rng rng(seed);
  std::vector<SignalAverager> demand_avg(s.M, SignalAverager(s.averaging_window));
  std::vector<SignalAverager> price_avg(s.M, SignalAverager(s.averaging_window));
  std::vector<std::vector<PriceObservation>> history(s.M);

  std::vector<double> prices = s.c_init;
  std::size_t streak = 0;
  for (std::size_t t = 0; t < s.max_rounds; ++t) {
    RoundState st;
    st.round = t;
    st.prices = prices;
    st.planned_demands = optimal_demand(s, prices);
    st.demands.resize(s.M);
    for (std::size_t m = 0; m < s.M; ++m) {
      const double noisy = inject_noise(st.planned_demands[m], s.noise_rho, rng);
      const double executed = s.averaging ? demand_avg[m].push(noisy) : noisy;
      st.demands[m] = std::max(executed, kDemandFloor);
    }
    st.user_utility = user_utility(s, st.demands, st.prices);
    st.fog_gains.resize(s.M);
    for (std::size_t m = 0; m < s.M; ++m) {
      st.fog_gains[m] = fog_gain(s, m, st.prices[m], st.demands[m]);
      st.spend += st.prices[m] * st.demands[m];
      history[m].push_back({st.prices[m], st.demands[m]});
    }

    if (!trace.rounds.empty()) {
      streak = detail::round_settled(trace.rounds.back(), st, s.conv_tol) ? streak + 1 : 0;
    }
    trace.rounds.push_back(std::move(st));
    if (streak >= s.conv_window) {
      trace.converged = true;
      trace.convergence_round = t;
      break;
    }

    for (std::size_t m = 0; m < s.M; ++m) {
      const double best = price_update(s, m, history[m], rule);
      const double noisy = inject_noise(best, s.noise_rho, rng);
      const double executed = s.averaging ? price_avg[m].push(noisy) : noisy;
      prices[m] = std::clamp(executed, s.c_lower[m], s.c_max[m]);
    }
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Metrics

struct MetricsSummary {
  std::size_t runs = 0;
  double mean_final_user_utility = 0.0;
  double mean_final_fog_gain = 0.0;  // aggregate over nodes
  double convergence_rate = 0.0;
  std::optional<double> mean_convergence_round;
  double instability_index = 0.0;
};

// Mean over nodes of std/mean of the price over the trailing conv_window rounds.
inline double instability_index(const NegotiationTrace& trace) {
  const auto& rounds = trace.rounds;
  if (rounds.empty()) throw InvalidArgument("empty trace");
  const std::size_t w = std::min(trace.scenario.conv_window, rounds.size());
  const std::size_t M = rounds.front().prices.size();
  double total = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    double mean = 0.0;
    for (std::size_t t = rounds.size() - w; t < rounds.size(); ++t) mean += rounds[t].prices[m];
    mean /= static_cast<double>(w);
    double var = 0.0;
    for (std::size_t t = rounds.size() - w; t < rounds.size(); ++t) {
      const double d = rounds[t].prices[m] - mean;
      var += d * d;
    }
    var /= static_cast<double>(w);
    total += std::sqrt(var) / mean;
  }
  return total / static_cast<double>(M);
}

inline double final_fog_gain(const NegotiationTrace& trace) {
  const auto& g = trace.rounds.back().fog_gains;
  return std::accumulate(g.begin(), g.end(), 0.0);
}

inline MetricsSummary compute_metrics(std::span<const NegotiationTrace> traces) {
  if (traces.empty()) throw InvalidArgument("compute_metrics needs at least one trace");
  MetricsSummary out;
  out.runs = traces.size();
  double conv_rounds = 0.0;
  std::size_t converged = 0;
  for (const auto& tr : traces) {
    if (tr.rounds.empty()) throw InvalidArgument("empty trace");
    out.mean_final_user_utility += tr.rounds.back().user_utility;
    out.mean_final_fog_gain += final_fog_gain(tr);
    out.instability_index += instability_index(tr);
    if (tr.converged) {
      ++converged;
      conv_rounds += static_cast<double>(*tr.convergence_round);
    }
  }
  const double n = static_cast<double>(traces.size());
  out.mean_final_user_utility /= n;
  out.mean_final_fog_gain /= n;
  out.instability_index /= n;
  out.convergence_rate = static_cast<double>(converged) / n;
  if (converged > 0) out.mean_convergence_round = conv_rounds / static_cast<double>(converged);
  return out;
}

// Percentile bootstrap interval for mean(a) - mean(b), resampling seeds
// independently within each group.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

inline Interval bootstrap_mean_difference(std::span<const double> a, std::span<const double> b,
                                          double confidence = 0.95, std::size_t resamples = 4000,
                                          std::uint64_t seed = 12345) {
  if (a.empty() || b.empty()) throw InvalidArgument("bootstrap needs nonempty samples");
  Rng rng(seed);
  auto resample_mean = [&](std::span<const double> x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      s += x[static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(x.size()))];
    }
    return s / static_cast<double>(x.size());
  };
  std::vector<double> diffs(resamples);
  for (auto& d : diffs) d = resample_mean(a) - resample_mean(b);
  std::sort(diffs.begin(), diffs.end());
  const double tail = (1.0 - confidence) / 2.0;
  const auto at = [&](double q) {
    const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(resamples - 1)));
    return diffs[std::min(idx, resamples - 1)];
  };
  return {at(tail), at(1.0 - tail)};
}

}  // namespace bgt::fog
