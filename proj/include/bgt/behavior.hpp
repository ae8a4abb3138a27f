#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "bgt/error.hpp"
#include "bgt/game.hpp"

namespace bgt {

enum class NoNashFallback { Error, Uniform };

// Level-0 behaviour: uniform randomization unless a custom profile is given.
struct Level0Spec {
  std::optional<StrategyProfile> custom;

  bool operator==(const Level0Spec&) const = default;
};

// How a reasoning level responds to its belief.
struct Response {
  enum class Kind { ExactBR, QBR };
  Kind kind = Kind::ExactBR;
  double lambda = 0.0;  // used by QBR only

  static Response exact() { return {}; }
  static Response qbr(double lambda) { return {Kind::QBR, lambda}; }
  bool operator==(const Response&) const = default;
};

// Best response to uniform opponent play, ties split uniformly.
struct BestResponseModel {
  bool operator==(const BestResponseModel&) const = default;
};

struct EpsilonNashModel {
  double epsilon = 0.0;
  NoNashFallback no_nash_fallback = NoNashFallback::Error;
  bool operator==(const EpsilonNashModel&) const = default;
};

// Predicts the player's strategy in the logit quantal-response equilibrium.
struct LogitQbrModel {
  double lambda = 0.0;
  bool operator==(const LogitQbrModel&) const = default;
};

struct LevelKModel {
  std::vector<double> level_weights{1.0};  // levels 0..K
  Level0Spec level0;
  Response response;
  bool operator==(const LevelKModel&) const = default;
};

struct CognitiveHierarchyModel {
  enum class Target { TopLevel, Population };
  double tau = 1.5;
  std::size_t max_level = 2;
  Level0Spec level0;
  Response response;
  Target target = Target::TopLevel;
  bool operator==(const CognitiveHierarchyModel&) const = default;
};

struct NoisyIntrospectionModel {
  double lambda0 = 1.0;
  double decay = 0.5;
  std::size_t max_depth = 5;
  bool operator==(const NoisyIntrospectionModel&) const = default;
};

using BehavioralModel =
    std::variant<BestResponseModel, EpsilonNashModel, LogitQbrModel, LevelKModel,
                 CognitiveHierarchyModel, NoisyIntrospectionModel>;

// ---------------------------------------------------------------------------
// Validation

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw InvalidParameter(msg);
}

inline void validate_response(const Response& r) {
  if (r.kind == Response::Kind::QBR) {
    require(std::isfinite(r.lambda) && r.lambda >= 0.0, "lambda must be finite and >= 0");
  }
}

inline void validate_level0(const Level0Spec& l0, const NormalFormGame* game) {
  if (!l0.custom || game == nullptr) return;
  require(l0.custom->size() == game->num_players(), "custom level-0 needs one strategy per player");
  for (std::size_t i = 0; i < game->num_players(); ++i) {
    require((*l0.custom)[i].size() == game->num_actions(i),
            "custom level-0 strategy length does not match action count");
  }
}

}  // namespace detail

// Throws InvalidParameter. With a game, also checks game-shaped parameters.
inline void validate(const BehavioralModel& model, const NormalFormGame* game = nullptr) {
  using detail::require;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, EpsilonNashModel>) {
          require(m.epsilon >= 0.0 && m.epsilon <= 1.0, "epsilon must lie in [0,1]");
        } else if constexpr (std::is_same_v<T, LogitQbrModel>) {
          require(std::isfinite(m.lambda) && m.lambda >= 0.0, "lambda must be finite and >= 0");
        } else if constexpr (std::is_same_v<T, LevelKModel>) {
          require(!m.level_weights.empty(), "level_weights must not be empty");
          double total = 0.0;
          for (double w : m.level_weights) {
            require(w >= 0.0 && w <= 1.0, "level weight outside [0,1]");
            total += w;
          }
          require(std::abs(total - 1.0) <= kProbabilityTolerance, "level_weights must sum to 1");
          detail::validate_response(m.response);
          detail::validate_level0(m.level0, game);
        } else if constexpr (std::is_same_v<T, CognitiveHierarchyModel>) {
          require(std::isfinite(m.tau) && m.tau > 0.0, "tau must be > 0");
          require(m.max_level >= 1, "max_level must be >= 1");
          detail::validate_response(m.response);
          detail::validate_level0(m.level0, game);
        } else if constexpr (std::is_same_v<T, NoisyIntrospectionModel>) {
          require(std::isfinite(m.lambda0) && m.lambda0 >= 0.0, "lambda0 must be >= 0");
          require(m.decay > 0.0 && m.decay < 1.0, "decay must lie in (0,1)");
          require(m.max_depth >= 1, "max_depth must be >= 1");
        }
      },
      model);
}

// ---------------------------------------------------------------------------
// Response primitives

// exp(lambda*u_i) / sum_j exp(lambda*u_j), evaluated after subtracting the
// maximum utility so large lambda*u cannot overflow.
inline MixedStrategy logit_qbr(std::span<const double> utilities, double lambda) {
  if (utilities.empty()) throw InvalidArgument("logit_qbr needs at least one utility");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidParameter("lambda must be >= 0");
  const double top = *std::max_element(utilities.begin(), utilities.end());
  std::vector<double> w(utilities.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!std::isfinite(utilities[i])) throw InvalidArgument("utilities must be finite");
    w[i] = std::exp(lambda * (utilities[i] - top));
    total += w[i];
  }
  for (double& x : w) x /= total;
  return MixedStrategy(std::move(w));
}

inline MixedStrategy respond(std::span<const double> utilities, const Response& response) {
  if (response.kind == Response::Kind::QBR) return logit_qbr(utilities, response.lambda);
  const auto best = argmax_set(utilities);
  return MixedStrategy::uniform_over(utilities.size(), best);
}

// Convex combination of strategies over the same action set. Weights need
// not be normalized; they are rescaled to sum to one.
inline MixedStrategy mix(std::span<const MixedStrategy> strategies, std::span<const double> weights) {
  if (strategies.empty() || strategies.size() != weights.size()) {
    throw InvalidArgument("mix needs one weight per strategy");
  }
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw InvalidArgument("mix weights must have positive mass");
  std::vector<double> out(strategies.front().size(), 0.0);
  for (std::size_t k = 0; k < strategies.size(); ++k) {
    if (weights[k] == 0.0) continue;
    for (std::size_t a = 0; a < out.size(); ++a) out[a] += weights[k] / total * strategies[k][a];
  }
  double s = 0.0;
  for (double& x : out) s += x;
  for (double& x : out) x = std::clamp(x / s, 0.0, 1.0);
  return MixedStrategy(std::move(out));
}

inline StrategyProfile uniform_profile(const NormalFormGame& game) {
  StrategyProfile p;
  for (std::size_t i = 0; i < game.num_players(); ++i) {
    p.push_back(MixedStrategy::uniform(game.num_actions(i)));
  }
  return p;
}

// Every player's response to the others' strategies in `profile`.
inline StrategyProfile respond_all(const NormalFormGame& game, const StrategyProfile& profile,
                                   const Response& response) {
  StrategyProfile out;
  out.reserve(game.num_players());
  for (std::size_t i = 0; i < game.num_players(); ++i) {
    const auto eu = expected_utilities(game, i, Belief::from_profile(game, i, profile));
    out.push_back(respond(eu, response));
  }
  return out;
}

// ---------------------------------------------------------------------------
// epsilon-Nash

inline MixedStrategy epsilon_nash_predict(const NormalFormGame& game, std::size_t player,
                                          double epsilon, NoNashFallback fallback) {
  game.check_player(player);
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw InvalidParameter("epsilon must lie in [0,1]");
  const std::size_t n = game.num_actions(player);
  const auto equilibria = pure_nash(game);
  if (equilibria.empty()) {
    if (fallback == NoNashFallback::Error) {
      throw NoEquilibrium("game has no pure Nash equilibrium");
    }
    return MixedStrategy::uniform(n);
  }
  const std::size_t chosen = equilibria.front()[player];
  if (n == 1) return MixedStrategy::point_mass(1, 0);
  std::vector<double> w(n, epsilon / static_cast<double>(n - 1));
  w[chosen] = 1.0 - epsilon;
  return MixedStrategy(std::move(w));
}

// ---------------------------------------------------------------------------
// Quantal-response equilibrium

struct QbrEquilibrium {
  StrategyProfile profile;
  double residual = 0.0;
  std::size_t iterations = 0;
};

// max over players and actions of |sigma - QBR(sigma)|.
inline double qbr_residual(const NormalFormGame& game, double lambda, const StrategyProfile& profile) {
  const auto image = respond_all(game, profile, Response::qbr(lambda));
  double r = 0.0;
  for (std::size_t i = 0; i < profile.size(); ++i) {
    for (std::size_t a = 0; a < profile[i].size(); ++a) {
      r = std::max(r, std::abs(profile[i][a] - image[i][a]));
    }
  }
  return r;
}

// Damped fixed-point iteration sigma <- (1-d) sigma + d QBR(sigma), started
// from uniform play. Throws ConvergenceFailure after max_iters.
inline QbrEquilibrium qbr_equilibrium(const NormalFormGame& game, double lambda,
                                      double damping = 0.5, std::size_t max_iters = 10000,
                                      double tol = 1e-10) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidParameter("lambda must be >= 0");
  if (!(damping > 0.0 && damping <= 1.0)) throw InvalidParameter("damping must lie in (0,1]");
  if (!(tol > 0.0)) throw InvalidParameter("tol must be > 0");
  const Response qbr = Response::qbr(lambda);
  StrategyProfile sigma = uniform_profile(game);
  double residual = 0.0;
  for (std::size_t it = 0;; ++it) {
    const auto image = respond_all(game, sigma, qbr);
    residual = 0.0;
    for (std::size_t i = 0; i < sigma.size(); ++i) {
      for (std::size_t a = 0; a < sigma[i].size(); ++a) {
        residual = std::max(residual, std::abs(sigma[i][a] - image[i][a]));
      }
    }
    if (residual < tol) return {std::move(sigma), residual, it};
    if (it == max_iters) break;
    for (std::size_t i = 0; i < sigma.size(); ++i) {
      const MixedStrategy pair[] = {sigma[i], image[i]};
      const double w[] = {1.0 - damping, damping};
      sigma[i] = mix(pair, w);
    }
  }
  std::vector<std::vector<double>> last;
  for (const auto& s : sigma) last.push_back(s.weights());
  throw ConvergenceFailure("qbr_equilibrium did not converge within " +
                               std::to_string(max_iters) + " iterations",
                           std::move(last), residual);
}

// ---------------------------------------------------------------------------
// Iterative reasoning

namespace detail {

inline StrategyProfile level0_profile(const NormalFormGame& game, const Level0Spec& spec) {
  if (!spec.custom) return uniform_profile(game);
  validate_level0(spec, &game);
  return *spec.custom;
}

inline double poisson_pmf(double tau, std::size_t k) {
  return std::exp(static_cast<double>(k) * std::log(tau) - tau -
                  std::lgamma(static_cast<double>(k) + 1.0));
}

}  // namespace detail

// Level-k strategies of every player for k = 0..max_level; entry [k][i].
inline std::vector<StrategyProfile> level_k_hierarchy(const NormalFormGame& game,
                                                      const Level0Spec& level0,
                                                      const Response& response,
                                                      std::size_t max_level) {
  std::vector<StrategyProfile> levels;
  levels.reserve(max_level + 1);
  levels.push_back(detail::level0_profile(game, level0));
  for (std::size_t k = 1; k <= max_level; ++k) {
    levels.push_back(respond_all(game, levels.back(), response));
  }
  return levels;
}

inline MixedStrategy level_k_predict(const NormalFormGame& game, std::size_t player,
                                     const LevelKModel& model) {
  game.check_player(player);
  validate(model, &game);
  const auto levels =
      level_k_hierarchy(game, model.level0, model.response, model.level_weights.size() - 1);
  std::vector<MixedStrategy> own;
  for (const auto& lvl : levels) own.push_back(lvl[player]);
  return mix(own, model.level_weights);
}

// Poisson(tau) pmf over levels 0..max_level, unnormalized.
inline std::vector<double> poisson_level_weights(double tau, std::size_t max_level) {
  std::vector<double> w(max_level + 1);
  for (std::size_t k = 0; k <= max_level; ++k) w[k] = detail::poisson_pmf(tau, k);
  return w;
}

// Cognitive-hierarchy strategies for levels 0..max_level. Level k responds
// to the Poisson mixture of levels 0..k-1, renormalized over those levels.
inline std::vector<StrategyProfile> cognitive_hierarchy_levels(const NormalFormGame& game,
                                                               const CognitiveHierarchyModel& model) {
  validate(model, &game);
  const auto pmf = poisson_level_weights(model.tau, model.max_level);
  std::vector<StrategyProfile> levels;
  levels.push_back(detail::level0_profile(game, model.level0));
  for (std::size_t k = 1; k <= model.max_level; ++k) {
    const std::span<const double> lower(pmf.data(), k);
    StrategyProfile belief_profile;
    for (std::size_t j = 0; j < game.num_players(); ++j) {
      std::vector<MixedStrategy> by_level;
      for (std::size_t h = 0; h < k; ++h) by_level.push_back(levels[h][j]);
      belief_profile.push_back(mix(by_level, lower));
    }
    levels.push_back(respond_all(game, belief_profile, model.response));
  }
  return levels;
}

// Prediction for the highest-level agent.
inline MixedStrategy cognitive_hierarchy_predict(const NormalFormGame& game, std::size_t player,
                                                 const CognitiveHierarchyModel& model) {
  game.check_player(player);
  return cognitive_hierarchy_levels(game, model).back()[player];
}

// Population prediction: Poisson-weighted mixture over levels 0..max_level.
inline MixedStrategy cognitive_hierarchy_population(const NormalFormGame& game, std::size_t player,
                                                    const CognitiveHierarchyModel& model) {
  game.check_player(player);
  const auto levels = cognitive_hierarchy_levels(game, model);
  std::vector<MixedStrategy> own;
  for (const auto& lvl : levels) own.push_back(lvl[player]);
  return mix(own, poisson_level_weights(model.tau, model.max_level));
}

// Depth max_depth plays uniformly; depth d responds to depth d+1 with
// precision lambda0 * decay^d. Returns the depth-0 strategy.
inline MixedStrategy noisy_introspection_predict(const NormalFormGame& game, std::size_t player,
                                                 const NoisyIntrospectionModel& model) {
  game.check_player(player);
  validate(model, &game);
  StrategyProfile deeper = uniform_profile(game);
  for (std::size_t d = model.max_depth; d-- > 0;) {
    const double lambda = model.lambda0 * std::pow(model.decay, static_cast<double>(d));
    deeper = respond_all(game, deeper, Response::qbr(lambda));
  }
  return deeper[player];
}

// ---------------------------------------------------------------------------
// Dispatch

namespace detail {

// Each player's strategy is coded by its first n_i - 1 probabilities.
inline std::optional<StrategyProfile> decode_profile(const NormalFormGame& game, const Eigen::VectorXd& x) {
  StrategyProfile out;
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < game.num_players(); ++i) {
    const std::size_t n = game.num_actions(i);
    std::vector<double> w(n);
    double rest = 1.0;
    for (std::size_t a = 0; a + 1 < n; ++a) {
      w[a] = x[k++];
      if (!(w[a] >= 0.0 && w[a] <= 1.0)) return std::nullopt;
      rest -= w[a];
    }
    if (rest < 0.0) {
      if (rest < -kProbabilityTolerance) return std::nullopt;
      rest = 0.0;
    }
    w[n - 1] = rest;
    out.emplace_back(std::move(w));
  }
  return out;
}

inline Eigen::VectorXd qbr_defect(const NormalFormGame& game, double lambda, const StrategyProfile& sigma) {
  const auto image = respond_all(game, sigma, Response::qbr(lambda));
  std::vector<double> f;
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    for (std::size_t a = 0; a + 1 < sigma[i].size(); ++a) f.push_back(sigma[i][a] - image[i][a]);
  }
  return Eigen::Map<Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
}

// Newton's method on sigma - QBR(sigma) = 0 with a finite-difference
// Jacobian and backtracking that keeps every iterate on the simplex.
// Returns nullopt unless the residual drops below tol.
inline std::optional<StrategyProfile> qbr_newton(const NormalFormGame& game, double lambda,
                                                 const std::vector<std::vector<double>>& start, double tol,
                                                 std::size_t max_iters = 50) {
  std::vector<double> x0;
  for (const auto& s : start) x0.insert(x0.end(), s.begin(), s.end() - 1);
  Eigen::VectorXd x = Eigen::Map<Eigen::VectorXd>(x0.data(), static_cast<Eigen::Index>(x0.size()));
  auto sigma = decode_profile(game, x);
  if (!sigma) return std::nullopt;
  Eigen::VectorXd f = qbr_defect(game, lambda, *sigma);
  const Eigen::Index dim = x.size();
  constexpr double h = 1e-7;
  for (std::size_t it = 0; it < max_iters; ++it) {
    if (qbr_residual(game, lambda, *sigma) < tol) return sigma;
    Eigen::MatrixXd jac(dim, dim);
    for (Eigen::Index c = 0; c < dim; ++c) {
      Eigen::VectorXd lo = x, hi = x;
      lo[c] -= h;
      hi[c] += h;
      const auto slo = decode_profile(game, lo);
      const auto shi = decode_profile(game, hi);
      if (!slo || !shi) return std::nullopt;
      jac.col(c) = (qbr_defect(game, lambda, *shi) - qbr_defect(game, lambda, *slo)) / (2.0 * h);
    }
    const Eigen::VectorXd step = jac.fullPivLu().solve(-f);
    if (!step.allFinite()) return std::nullopt;
    bool accepted = false;
    for (double t = 1.0; t > 1e-6; t *= 0.5) {
      const Eigen::VectorXd trial = x + t * step;
      auto s = decode_profile(game, trial);
      if (!s) continue;
      const Eigen::VectorXd ft = qbr_defect(game, lambda, *s);
      if (ft.lpNorm<Eigen::Infinity>() < f.lpNorm<Eigen::Infinity>()) {
        x = trial;
        f = ft;
        sigma = std::move(s);
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  if (qbr_residual(game, lambda, *sigma) < tol) return sigma;
  return std::nullopt;
}

}  // namespace detail

// QBR-equilibrium prediction. The damped iteration can stall near a
// bifurcation of the logit map or cycle when it is steep; on failure the
// last iterate is polished with Newton's method, and otherwise each retry
// halves the damping.
inline constexpr int kQbrDampingAttempts = 6;
inline constexpr double kQbrPredictTol = 1e-11;

inline MixedStrategy logit_qbr_predict(const NormalFormGame& game, std::size_t player, double lambda) {
  game.check_player(player);
  double damping = 0.5;
  std::size_t budget = 1000;
  for (int attempt = 0;; ++attempt) {
    try {
      return qbr_equilibrium(game, lambda, damping, budget, kQbrPredictTol).profile[player];
    } catch (const ConvergenceFailure& e) {
      if (auto polished = detail::qbr_newton(game, lambda, e.last_iterate(), kQbrPredictTol)) {
        return (*polished)[player];
      }
      if (attempt + 1 == kQbrDampingAttempts) throw;
      damping *= 0.5;
      budget *= 2;
    }
  }
}

inline MixedStrategy predict(const BehavioralModel& model, const NormalFormGame& game,
                             std::size_t player) {
  game.check_player(player);
  validate(model, &game);
  return std::visit(
      [&](const auto& m) -> MixedStrategy {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, BestResponseModel>) {
          return MixedStrategy::uniform_over(game.num_actions(player),
                                             best_response_set(game, player, Belief::uniform(game, player)));
        } else if constexpr (std::is_same_v<T, EpsilonNashModel>) {
          return epsilon_nash_predict(game, player, m.epsilon, m.no_nash_fallback);
        } else if constexpr (std::is_same_v<T, LogitQbrModel>) {
          return logit_qbr_predict(game, player, m.lambda);
        } else if constexpr (std::is_same_v<T, LevelKModel>) {
          return level_k_predict(game, player, m);
        } else if constexpr (std::is_same_v<T, CognitiveHierarchyModel>) {
          return m.target == CognitiveHierarchyModel::Target::TopLevel
                     ? cognitive_hierarchy_predict(game, player, m)
                     : cognitive_hierarchy_population(game, player, m);
        } else {
          return noisy_introspection_predict(game, player, m);
        }
      },
      model);
}

}  // namespace bgt
