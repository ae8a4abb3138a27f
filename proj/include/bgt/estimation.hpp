#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bgt/behavior.hpp"
#include "bgt/error.hpp"
#include "bgt/game.hpp"

namespace bgt {

// Predicted probabilities below this are raised to it before taking logs.
inline constexpr double kProbabilityFloor = 1e-12;

struct Observation {
  NormalFormGame game;
  std::size_t player = 0;
  std::size_t action = 0;

  void check() const {
    game.check_player(player);
    game.check_action(player, action);
  }
  bool operator==(const Observation&) const = default;
};

struct ObservationDataset {
  std::vector<Observation> observations;

  std::size_t size() const noexcept { return observations.size(); }
  bool empty() const noexcept { return observations.empty(); }
  bool operator==(const ObservationDataset&) const = default;
};

// ---------------------------------------------------------------------------
// Parameterization of model families
//
// A family is a template BehavioralModel: its structural settings (fallback,
// level-0 spec, max level, depth) stay fixed while the free parameters
// listed by parameter_names() are varied.

inline std::vector<std::string> parameter_names(const BehavioralModel& family) {
  return std::visit(
      [](const auto& m) -> std::vector<std::string> {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, BestResponseModel>) {
          return {};
        } else if constexpr (std::is_same_v<T, EpsilonNashModel>) {
          return {"epsilon"};
        } else if constexpr (std::is_same_v<T, LogitQbrModel>) {
          return {"lambda"};
        } else if constexpr (std::is_same_v<T, LevelKModel>) {
          std::vector<std::string> names;
          for (std::size_t k = 0; k < m.level_weights.size(); ++k) names.push_back("w" + std::to_string(k));
          if (m.response.kind == Response::Kind::QBR) names.push_back("lambda");
          return names;
        } else if constexpr (std::is_same_v<T, CognitiveHierarchyModel>) {
          if (m.response.kind == Response::Kind::QBR) return {"tau", "lambda"};
          return {"tau"};
        } else {
          return {"lambda0", "decay"};
        }
      },
      family);
}

inline std::vector<double> parameters_of(const BehavioralModel& model) {
  return std::visit(
      [](const auto& m) -> std::vector<double> {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, BestResponseModel>) {
          return {};
        } else if constexpr (std::is_same_v<T, EpsilonNashModel>) {
          return {m.epsilon};
        } else if constexpr (std::is_same_v<T, LogitQbrModel>) {
          return {m.lambda};
        } else if constexpr (std::is_same_v<T, LevelKModel>) {
          auto out = m.level_weights;
          if (m.response.kind == Response::Kind::QBR) out.push_back(m.response.lambda);
          return out;
        } else if constexpr (std::is_same_v<T, CognitiveHierarchyModel>) {
          if (m.response.kind == Response::Kind::QBR) return {m.tau, m.response.lambda};
          return {m.tau};
        } else {
          return {m.lambda0, m.decay};
        }
      },
      model);
}

// Projects nonnegative level weights onto the simplex.
inline std::vector<double> normalize_weights(std::span<const double> w) {
  std::vector<double> out(w.begin(), w.end());
  double total = 0.0;
  for (double& x : out) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw InvalidParameter("level weights must be finite and >= 0");
    total += x;
  }
  if (!(total > 0.0)) throw InvalidParameter("level weights must have positive mass");
  for (double& x : out) x /= total;
  return out;
}

// The family with theta substituted; validated. LevelK weights are
// renormalized onto the simplex.
inline BehavioralModel with_parameters(const BehavioralModel& family, std::span<const double> theta) {
  const auto names = parameter_names(family);
  if (theta.size() != names.size()) {
    throw InvalidParameter("expected " + std::to_string(names.size()) + " parameters, got " +
                           std::to_string(theta.size()));
  }
  BehavioralModel out = std::visit(
      [&](auto m) -> BehavioralModel {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, EpsilonNashModel>) {
          m.epsilon = theta[0];
        } else if constexpr (std::is_same_v<T, LogitQbrModel>) {
          m.lambda = theta[0];
        } else if constexpr (std::is_same_v<T, LevelKModel>) {
          const std::size_t k = m.level_weights.size();
          m.level_weights = normalize_weights(theta.first(k));
          if (m.response.kind == Response::Kind::QBR) m.response.lambda = theta[k];
        } else if constexpr (std::is_same_v<T, CognitiveHierarchyModel>) {
          m.tau = theta[0];
          if (m.response.kind == Response::Kind::QBR) m.response.lambda = theta[1];
        } else if constexpr (std::is_same_v<T, NoisyIntrospectionModel>) {
          m.lambda0 = theta[0];
          m.decay = theta[1];
        }
        return m;
      },
      family);
  validate(out);
  return out;
}

// ---------------------------------------------------------------------------
// Likelihood

struct LikelihoodReport {
  double log_likelihood = 0.0;
  std::size_t floored = 0;  // observations whose probability hit the floor
};

inline LikelihoodReport likelihood_report(const BehavioralModel& model, const ObservationDataset& data) {
  LikelihoodReport rep;
  for (const auto& obs : data.observations) {
    obs.check();
    const double p = predict(model, obs.game, obs.player)[obs.action];
    if (p < kProbabilityFloor) ++rep.floored;
    rep.log_likelihood += std::log(std::max(p, kProbabilityFloor));
  }
  return rep;
}

inline double log_likelihood(const BehavioralModel& family, std::span<const double> theta,
                             const ObservationDataset& data) {
  return likelihood_report(with_parameters(family, theta), data).log_likelihood;
}

// ---------------------------------------------------------------------------
// Maximum-likelihood search

struct ParamBounds {
  double lo = 0.0;
  double hi = 1.0;
  bool operator==(const ParamBounds&) const = default;
};

struct SearchOptions {
  std::size_t grid_points = 11;
  std::size_t refine_iters = 4;
  bool operator==(const SearchOptions&) const = default;
};

struct FitResult {
  std::vector<std::string> names;
  std::vector<double> params;
  double log_likelihood = 0.0;
  std::size_t evaluations = 0;
  std::size_t floored_observations = 0;
  std::optional<double> cv_score;
};

// Default search box per parameter name.
inline ParamBounds default_bounds(const std::string& name) {
  if (name == "epsilon") return {0.0, 1.0};
  if (name == "lambda" || name == "lambda0") return {0.0, 5.0};
  if (name == "tau") return {0.05, 5.0};
  if (name == "decay") return {0.05, 0.95};
  return {0.0, 1.0};  // level weights
}

namespace detail {

// Cap on the coarse grid so multi-parameter families stay tractable.
inline constexpr std::size_t kMaxGridEvaluations = 4096;

class Objective {
 public:
  Objective(const BehavioralModel& family, const ObservationDataset& data) : family_(family), data_(data) {}

  // -inf for parameter vectors the family rejects.
  double operator()(std::span<const double> theta) {
    ++evaluations_;
    try {
      return log_likelihood(family_, theta, data_);
    } catch (const InvalidParameter&) {
      return -std::numeric_limits<double>::infinity();
    }
  }
  std::size_t evaluations() const noexcept { return evaluations_; }

 private:
  const BehavioralModel& family_;
  const ObservationDataset& data_;
  std::size_t evaluations_ = 0;
};

// Golden-section maximization of f on [lo, hi]; returns (argmax, max).
template <typename F>
std::pair<double, double> golden_section_max(F&& f, double lo, double hi, std::size_t iters = 40) {
  constexpr double kInvPhi = 0.6180339887498949;
  double a = lo, b = hi;
  double x1 = b - kInvPhi * (b - a);
  double x2 = a + kInvPhi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (std::size_t i = 0; i < iters && b - a > 1e-7 * std::max(1.0, std::abs(b)); ++i) {
    if (f1 >= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kInvPhi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kInvPhi * (b - a);
      f2 = f(x2);
    }
  }
  return f1 >= f2 ? std::pair{x1, f1} : std::pair{x2, f2};
}

inline bool is_level_k(const BehavioralModel& family) {
  return std::holds_alternative<LevelKModel>(family);
}

}  // namespace detail

// Coarse grid over the bounds, then coordinate-wise golden-section
// refinement around the best point with a halving search radius.
inline FitResult fit_mle(const BehavioralModel& family, const ObservationDataset& data,
                         std::span<const ParamBounds> bounds, const SearchOptions& search = {}) {
  if (data.empty()) throw InvalidArgument("empty dataset");
  if (search.grid_points < 3) throw InvalidArgument("grid_points must be >= 3");
  const auto names = parameter_names(family);
  if (bounds.size() != names.size()) throw InvalidArgument("need one bound per parameter");
  for (const auto& b : bounds) {
    if (!std::isfinite(b.lo) || !std::isfinite(b.hi) || !(b.lo <= b.hi)) {
      throw InvalidArgument("parameter bounds must be finite with lo <= hi");
    }
  }

  detail::Objective objective(family, data);
  FitResult result;
  result.names = names;
  const std::size_t dims = names.size();

  if (dims == 0) {
    result.log_likelihood = objective({});
  } else {
    std::size_t points = search.grid_points;
    while (points > 3 && std::pow(static_cast<double>(points), static_cast<double>(dims)) >
                             static_cast<double>(detail::kMaxGridEvaluations)) {
      --points;
    }
    std::vector<double> step(dims);
    for (std::size_t d = 0; d < dims; ++d) {
      step[d] = (bounds[d].hi - bounds[d].lo) / static_cast<double>(points - 1);
    }

    std::vector<std::size_t> idx(dims, 0);
    std::vector<double> theta(dims);
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> best_theta(dims);
    for (bool more = true; more;) {
      for (std::size_t d = 0; d < dims; ++d) theta[d] = bounds[d].lo + step[d] * static_cast<double>(idx[d]);
      const double ll = objective(theta);
      if (ll > best) {
        best = ll;
        best_theta = theta;
      }
      more = false;
      for (std::size_t d = dims; d-- > 0;) {
        if (++idx[d] < points) {
          more = true;
          break;
        }
        idx[d] = 0;
      }
    }
    if (!std::isfinite(best)) throw InvalidArgument("no admissible parameter vector inside the bounds");

    const bool simplex = detail::is_level_k(family);
    const std::size_t num_weights = simplex ? std::get<LevelKModel>(family).level_weights.size() : 0;
    std::vector<double> radius = step;
    for (std::size_t it = 0; it < search.refine_iters; ++it) {
      for (std::size_t d = 0; d < dims; ++d) {
        const double lo = std::max(bounds[d].lo, best_theta[d] - radius[d]);
        const double hi = std::min(bounds[d].hi, best_theta[d] + radius[d]);
        if (!(hi > lo)) continue;
        std::vector<double> probe = best_theta;
        auto f = [&](double x) {
          probe[d] = x;
          return objective(probe);
        };
        const auto [x, fx] = detail::golden_section_max(f, lo, hi);
        if (fx > best) {
          best = fx;
          best_theta[d] = x;
          if (simplex && d < num_weights) {
            auto w = normalize_weights(std::span<const double>(best_theta).first(num_weights));
            std::copy(w.begin(), w.end(), best_theta.begin());
          }
        }
      }
      for (double& r : radius) r *= 0.5;
    }
    if (simplex) {
      auto w = normalize_weights(std::span<const double>(best_theta).first(num_weights));
      std::copy(w.begin(), w.end(), best_theta.begin());
      best = objective(best_theta);
    }
    result.params = best_theta;
    result.log_likelihood = best;
  }
  result.evaluations = objective.evaluations();
  result.floored_observations =
      likelihood_report(with_parameters(family, result.params), data).floored;
  return result;
}

inline FitResult fit_mle(const BehavioralModel& family, const ObservationDataset& data,
                         const SearchOptions& search = {}) {
  std::vector<ParamBounds> bounds;
  for (const auto& n : parameter_names(family)) bounds.push_back(default_bounds(n));
  return fit_mle(family, data, bounds, search);
}

// ---------------------------------------------------------------------------
// Cross-validation

struct CrossValidation {
  double mean_score = 0.0;          // held-out log-likelihood per observation
  std::vector<double> fold_scores;  // per-observation mean on each fold
  std::vector<std::size_t> order;   // shuffled observation indices
};

// Fisher-Yates permutation of 0..n-1 driven by a 64-bit Mersenne Twister.
inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

inline CrossValidation cross_validate(const BehavioralModel& family, const ObservationDataset& data,
                                      std::size_t k, std::span<const ParamBounds> bounds,
                                      const SearchOptions& search, std::uint64_t seed) {
  if (k < 2) throw InvalidArgument("cross-validation needs k >= 2");
  if (data.size() < k) throw InvalidArgument("dataset smaller than the number of folds");
  CrossValidation cv;
  cv.order = seeded_permutation(data.size(), seed);
  const std::size_t n = data.size();
  double total = 0.0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t begin = f * n / k;
    const std::size_t end = (f + 1) * n / k;
    ObservationDataset train, held_out;
    for (std::size_t i = 0; i < n; ++i) {
      auto& dst = (i >= begin && i < end) ? held_out : train;
      dst.observations.push_back(data.observations[cv.order[i]]);
    }
    const FitResult fit = fit_mle(family, train, bounds, search);
    const double ll = log_likelihood(family, fit.params, held_out);
    cv.fold_scores.push_back(ll / static_cast<double>(held_out.size()));
    total += ll;
  }
  cv.mean_score = total / static_cast<double>(n);
  return cv;
}

// ---------------------------------------------------------------------------
// Synthetic data

// Game with payoffs drawn uniformly from [lo, hi).
inline NormalFormGame random_game(std::vector<std::size_t> action_counts, double lo, double hi,
                                  std::mt19937_64& rng) {
  std::size_t cells = 1;
  for (std::size_t n : action_counts) cells *= n;
  std::vector<std::vector<double>> payoffs(action_counts.size(), std::vector<double>(cells));
  for (auto& p : payoffs) {
    for (double& x : p) x = lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
  }
  return NormalFormGame(std::move(action_counts), std::move(payoffs));
}

// Draws one action from `strategy` by inverse CDF.
inline std::size_t sample_action(const MixedStrategy& strategy, std::mt19937_64& rng) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  double acc = 0.0;
  for (std::size_t a = 0; a < strategy.size(); ++a) {
    acc += strategy[a];
    if (u < acc) return a;
  }
  return strategy.size() - 1;
}

// One observation per game: player alternates over games, the action is
// sampled from the model's prediction.
inline ObservationDataset simulate_choices(const BehavioralModel& model, std::span<const NormalFormGame> games,
                                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ObservationDataset data;
  for (std::size_t g = 0; g < games.size(); ++g) {
    const std::size_t player = g % games[g].num_players();
    const auto strategy = predict(model, games[g], player);
    data.observations.push_back({games[g], player, sample_action(strategy, rng)});
  }
  return data;
}

}  // namespace bgt
