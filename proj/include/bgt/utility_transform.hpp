#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "bgt/error.hpp"
#include "bgt/game.hpp"

namespace bgt {

// Prospect-theory parameters: power value function with loss aversion and a
// single-parameter inverse-S probability weighting curve. Defaults are the
// classic Tversky-Kahneman estimates.
struct ProspectParams {
  double gain_exp = 0.88;    // alpha, (0,1]
  double loss_exp = 0.88;    // beta, (0,1]
  double loss_scale = 2.25;  // lambda_loss, >= 1
  double weight_curve = 0.61;  // gamma, (kMinWeightCurve, 1]
  double reference = 0.0;

  // Below this the weighting curve stops being monotone on [0,1].
  static constexpr double kMinWeightCurve = 0.28;

  bool operator==(const ProspectParams&) const = default;
};

struct Lottery {
  std::vector<double> outcomes;
  std::vector<double> probs;

  Lottery() = default;
  Lottery(std::vector<double> x, std::vector<double> p) : outcomes(std::move(x)), probs(std::move(p)) {
    if (outcomes.size() != probs.size() || outcomes.empty()) {
      throw InvalidArgument("lottery needs equal-length, nonempty outcomes and probs");
    }
    double total = 0.0;
    for (double q : probs) {
      if (!(q >= 0.0 && q <= 1.0)) throw InvalidArgument("lottery probability outside [0,1]");
      total += q;
    }
    if (std::abs(total - 1.0) > kProbabilityTolerance) {
      throw InvalidArgument("lottery probabilities must sum to 1");
    }
  }

  bool operator==(const Lottery&) const = default;
};

inline double pt_weight_unchecked(double p, double gamma) {
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  const double a = std::pow(p, gamma);
  const double b = std::pow(1.0 - p, gamma);
  return a / std::pow(a + b, 1.0 / gamma);
}

// Throws InvalidParameter. The weighting curve is additionally checked for
// strict monotonicity on a grid.
inline void validate(const ProspectParams& p) {
  auto bad = [](const std::string& key, const std::string& why) {
    throw InvalidParameter("prospect." + key + " " + why);
  };
  if (!(p.gain_exp > 0.0 && p.gain_exp <= 1.0)) bad("gain_exp", "must lie in (0,1]");
  if (!(p.loss_exp > 0.0 && p.loss_exp <= 1.0)) bad("loss_exp", "must lie in (0,1]");
  if (!(p.loss_scale >= 1.0) || !std::isfinite(p.loss_scale)) bad("loss_scale", "must be >= 1");
  if (!(p.weight_curve > ProspectParams::kMinWeightCurve && p.weight_curve <= 1.0)) {
    bad("weight_curve", "must lie in (0.28,1]");
  }
  if (!std::isfinite(p.reference)) bad("reference", "must be finite");
  double prev = 0.0;
  for (int i = 1; i <= 1000; ++i) {
    const double w = pt_weight_unchecked(i / 1000.0, p.weight_curve);
    if (!(w > prev)) bad("weight_curve", "produces a non-monotone weighting function");
    prev = w;
  }
}

// Value of outcome x relative to the reference point: g^alpha for gains,
// -lambda_loss (-g)^beta for losses.
inline double pt_value(double x, const ProspectParams& params) {
  if (!std::isfinite(x)) throw InvalidArgument("pt_value needs a finite outcome");
  const double g = x - params.reference;
  if (g >= 0.0) return std::pow(g, params.gain_exp);
  return -params.loss_scale * std::pow(-g, params.loss_exp);
}

inline double pt_weight(double p, const ProspectParams& params) {
  if (!(params.weight_curve > ProspectParams::kMinWeightCurve && params.weight_curve <= 1.0)) {
    throw InvalidParameter("prospect.weight_curve must lie in (0.28,1]");
  }
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("probability outside [0,1]");
  return pt_weight_unchecked(p, params.weight_curve);
}

inline double pt_evaluate(const Lottery& lottery, const ProspectParams& params) {
  double v = 0.0;
  for (std::size_t i = 0; i < lottery.outcomes.size(); ++i) {
    v += pt_weight(lottery.probs[i], params) * pt_value(lottery.outcomes[i], params);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Social preferences

enum class InequityMetric { Range, MeanDeviation };

struct SocialPrefParams {
  double w_selfish = 1.0;
  double w_altruism = 0.0;
  double w_inequity = 0.0;
  double w_envy = 0.0;
  InequityMetric inequity_metric = InequityMetric::Range;

  bool operator==(const SocialPrefParams&) const = default;
};

inline void validate(const SocialPrefParams& p) {
  const double w[] = {p.w_selfish, p.w_altruism, p.w_inequity, p.w_envy};
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw InvalidParameter("social weights must be finite and >= 0");
  }
  if (std::none_of(std::begin(w), std::end(w), [](double x) { return x > 0.0; })) {
    throw InvalidParameter("at least one social weight must be positive");
  }
}

inline double inequity(std::span<const double> base, InequityMetric metric) {
  const auto [lo, hi] = std::minmax_element(base.begin(), base.end());
  if (metric == InequityMetric::Range) return *hi - *lo;
  const double mean = std::accumulate(base.begin(), base.end(), 0.0) / static_cast<double>(base.size());
  double dev = 0.0;
  for (double b : base) dev += std::abs(b - mean);
  return dev / static_cast<double>(base.size());
}

inline double social_utility(std::span<const double> base, std::size_t player,
                             const SocialPrefParams& params) {
  if (player >= base.size()) throw InvalidArgument("player index out of range");
  double others = 0.0;
  for (std::size_t j = 0; j < base.size(); ++j) {
    if (!std::isfinite(base[j])) throw InvalidArgument("base utilities must be finite");
    if (j != player) others += base[j];
  }
  const double top = *std::max_element(base.begin(), base.end());
  double u = params.w_selfish * base[player];
  if (params.w_altruism != 0.0) u += params.w_altruism * others;
  if (params.w_inequity != 0.0) u -= params.w_inequity * inequity(base, params.inequity_metric);
  if (params.w_envy != 0.0) u -= params.w_envy * std::max(0.0, top - base[player]);
  return u;
}

// Rewrites every cell's payoff for player i as social_utility over the
// cell's base payoff vector.
inline NormalFormGame transform_game_social(const NormalFormGame& game,
                                            std::span<const SocialPrefParams> params) {
  if (params.size() != game.num_players()) {
    throw InvalidArgument("need one social parameter block per player");
  }
  for (const auto& p : params) validate(p);
  const std::size_t n = game.num_players();
  std::vector<std::vector<double>> out(n, std::vector<double>(game.num_profiles()));
  std::vector<double> cell(n);
  for (std::size_t flat = 0; flat < game.num_profiles(); ++flat) {
    for (std::size_t i = 0; i < n; ++i) cell[i] = game.payoff_flat(i, flat);
    for (std::size_t i = 0; i < n; ++i) out[i][flat] = social_utility(cell, i, params[i]);
  }
  return NormalFormGame(game.action_counts(), std::move(out));
}

}  // namespace bgt
