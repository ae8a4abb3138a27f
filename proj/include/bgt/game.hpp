#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bgt/error.hpp"

namespace bgt {

using JointAction = std::vector<std::size_t>;

inline constexpr double kProbabilityTolerance = 1e-9;
// Actions whose expected utility is within this of the maximum count as
// best responses.
inline constexpr double kTieTolerance = 1e-9;

// Finite normal-form game with a dense payoff tensor per player. Joint
// actions are flattened row-major: player 0 is the most significant digit.
class NormalFormGame {
 public:
  NormalFormGame() = default;

  NormalFormGame(std::vector<std::size_t> action_counts,
                 std::vector<std::vector<double>> payoffs)
      : action_counts_(std::move(action_counts)), payoffs_(std::move(payoffs)) {
    if (action_counts_.empty()) {
      throw InvalidArgument("game needs at least one player");
    }
    num_profiles_ = 1;
    for (std::size_t n : action_counts_) {
      if (n == 0) throw InvalidArgument("every player needs at least one action");
      num_profiles_ *= n;
    }
    if (payoffs_.size() != action_counts_.size()) {
      throw InvalidArgument("payoff tensor count must equal the number of players");
    }
    for (const auto& p : payoffs_) {
      if (p.size() != num_profiles_) {
        throw InvalidArgument("payoff tensor has " + std::to_string(p.size()) +
                              " entries, expected " + std::to_string(num_profiles_));
      }
      if (!std::all_of(p.begin(), p.end(), [](double v) { return std::isfinite(v); })) {
        throw InvalidArgument("payoffs must be finite");
      }
    }
    strides_.assign(action_counts_.size(), 1);
    for (std::size_t i = action_counts_.size() - 1; i > 0; --i) {
      strides_[i - 1] = strides_[i] * action_counts_[i];
    }
  }

  // Two-player convenience: row-major matrices, rows are player 0's actions.
  static NormalFormGame bimatrix(std::size_t rows, std::size_t cols,
                                 std::vector<double> row_payoffs,
                                 std::vector<double> col_payoffs) {
    return NormalFormGame({rows, cols}, {std::move(row_payoffs), std::move(col_payoffs)});
  }

  std::size_t num_players() const noexcept { return action_counts_.size(); }
  std::size_t num_actions(std::size_t player) const {
    check_player(player);
    return action_counts_[player];
  }
  const std::vector<std::size_t>& action_counts() const noexcept { return action_counts_; }
  std::size_t num_profiles() const noexcept { return num_profiles_; }

  std::size_t flat_index(std::span<const std::size_t> profile) const {
    if (profile.size() != num_players()) {
      throw InvalidArgument("joint action has wrong number of players");
    }
    std::size_t idx = 0;
    for (std::size_t i = 0; i < profile.size(); ++i) {
      if (profile[i] >= action_counts_[i]) throw InvalidArgument("action index out of range");
      idx += profile[i] * strides_[i];
    }
    return idx;
  }

  JointAction profile_at(std::size_t flat) const {
    JointAction profile(num_players());
    for (std::size_t i = 0; i < num_players(); ++i) {
      profile[i] = (flat / strides_[i]) % action_counts_[i];
    }
    return profile;
  }

  std::size_t stride(std::size_t player) const { return strides_.at(player); }

  double payoff(std::size_t player, std::span<const std::size_t> profile) const {
    check_player(player);
    return payoffs_[player][flat_index(profile)];
  }
  double payoff_flat(std::size_t player, std::size_t flat) const {
    return payoffs_[player][flat];
  }
  const std::vector<double>& payoffs(std::size_t player) const {
    check_player(player);
    return payoffs_[player];
  }

  void check_player(std::size_t player) const {
    if (player >= num_players()) throw InvalidArgument("player index out of range");
  }
  void check_action(std::size_t player, std::size_t action) const {
    if (action >= num_actions(player)) throw InvalidArgument("action index out of range");
  }

  bool operator==(const NormalFormGame&) const = default;

 private:
  std::vector<std::size_t> action_counts_;
  std::vector<std::vector<double>> payoffs_;
  std::vector<std::size_t> strides_;
  std::size_t num_profiles_ = 0;
};

// Probability vector over one player's actions.
class MixedStrategy {
 public:
  MixedStrategy() = default;
  explicit MixedStrategy(std::vector<double> weights) : weights_(std::move(weights)) {
    if (weights_.empty()) throw InvalidArgument("mixed strategy needs at least one action");
    double total = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0 && w <= 1.0)) {
        throw InvalidArgument("mixed strategy weight outside [0,1]");
      }
      total += w;
    }
    if (std::abs(total - 1.0) > kProbabilityTolerance) {
      throw InvalidArgument("mixed strategy weights must sum to 1");
    }
  }

  static MixedStrategy uniform(std::size_t n) {
    if (n == 0) throw InvalidArgument("mixed strategy needs at least one action");
    return MixedStrategy(std::vector<double>(n, 1.0 / static_cast<double>(n)));
  }
  static MixedStrategy point_mass(std::size_t n, std::size_t action) {
    if (action >= n) throw InvalidArgument("action index out of range");
    std::vector<double> w(n, 0.0);
    w[action] = 1.0;
    return MixedStrategy(std::move(w));
  }
  // Uniform over a subset of actions.
  static MixedStrategy uniform_over(std::size_t n, std::span<const std::size_t> support) {
    if (support.empty()) throw InvalidArgument("empty support");
    std::vector<double> w(n, 0.0);
    const double p = 1.0 / static_cast<double>(support.size());
    for (std::size_t a : support) {
      if (a >= n) throw InvalidArgument("action index out of range");
      w[a] = p;
    }
    return MixedStrategy(std::move(w));
  }

  std::size_t size() const noexcept { return weights_.size(); }
  double operator[](std::size_t i) const { return weights_[i]; }
  const std::vector<double>& weights() const noexcept { return weights_; }

  bool operator==(const MixedStrategy&) const = default;

 private:
  std::vector<double> weights_;
};

using StrategyProfile = std::vector<MixedStrategy>;

// A player's belief about independent opponents: one marginal per opponent.
class Belief {
 public:
  // `opponents` lists the opponents' strategies in increasing player order,
  // skipping `owner`.
  Belief(const NormalFormGame& game, std::size_t owner, std::vector<MixedStrategy> opponents)
      : owner_(owner) {
    game.check_player(owner);
    if (opponents.size() + 1 != game.num_players()) {
      throw InvalidArgument("belief needs one strategy per opponent");
    }
    marginals_.reserve(game.num_players());
    std::size_t k = 0;
    for (std::size_t j = 0; j < game.num_players(); ++j) {
      if (j == owner) {
        marginals_.push_back(MixedStrategy::point_mass(1, 0));  // unused slot
        continue;
      }
      if (opponents[k].size() != game.num_actions(j)) {
        throw InvalidArgument("belief strategy length does not match opponent action count");
      }
      marginals_.push_back(std::move(opponents[k++]));
    }
  }

  // Drops the owner's own entry from a full profile.
  static Belief from_profile(const NormalFormGame& game, std::size_t owner,
                             const StrategyProfile& profile) {
    if (profile.size() != game.num_players()) {
      throw InvalidArgument("profile needs one strategy per player");
    }
    std::vector<MixedStrategy> opp;
    for (std::size_t j = 0; j < profile.size(); ++j) {
      if (j != owner) opp.push_back(profile[j]);
    }
    return Belief(game, owner, std::move(opp));
  }

  static Belief uniform(const NormalFormGame& game, std::size_t owner) {
    std::vector<MixedStrategy> opp;
    for (std::size_t j = 0; j < game.num_players(); ++j) {
      if (j != owner) opp.push_back(MixedStrategy::uniform(game.num_actions(j)));
    }
    return Belief(game, owner, std::move(opp));
  }

  std::size_t owner() const noexcept { return owner_; }
  // Strategy of opponent `player` (player != owner).
  const MixedStrategy& of(std::size_t player) const { return marginals_.at(player); }

 private:
  std::size_t owner_;
  std::vector<MixedStrategy> marginals_;
};

// Expected utility of every action of `player` against `belief`, in one pass
// over the payoff tensor.
inline std::vector<double> expected_utilities(const NormalFormGame& game, std::size_t player,
                                              const Belief& belief) {
  game.check_player(player);
  if (belief.owner() != player) throw InvalidArgument("belief is owned by another player");
  std::vector<double> eu(game.num_actions(player), 0.0);
  const std::size_t n = game.num_players();
  JointAction profile(n, 0);
  for (std::size_t flat = 0; flat < game.num_profiles(); ++flat) {
    double prob = 1.0;
    for (std::size_t j = 0; j < n && prob != 0.0; ++j) {
      if (j != player) prob *= belief.of(j)[profile[j]];
    }
    if (prob != 0.0) eu[profile[player]] += prob * game.payoff_flat(player, flat);
    // odometer, last player fastest
    for (std::size_t j = n; j-- > 0;) {
      if (++profile[j] < game.action_counts()[j]) break;
      profile[j] = 0;
    }
  }
  return eu;
}

inline double expected_utility(const NormalFormGame& game, std::size_t player,
                               std::size_t action, const Belief& belief) {
  game.check_action(player, action);
  return expected_utilities(game, player, belief)[action];
}

// Indices within kTieTolerance of the maximum. Never empty.
inline std::vector<std::size_t> argmax_set(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("argmax of empty vector");
  const double best = *std::max_element(values.begin(), values.end());
  std::vector<std::size_t> out;
  for (std::size_t a = 0; a < values.size(); ++a) {
    if (values[a] >= best - kTieTolerance) out.push_back(a);
  }
  return out;
}

inline std::vector<std::size_t> best_response_set(const NormalFormGame& game, std::size_t player,
                                                  const Belief& belief) {
  return argmax_set(expected_utilities(game, player, belief));
}

// All pure Nash equilibria in lexicographic order.
inline std::vector<JointAction> pure_nash(const NormalFormGame& game) {
  std::vector<JointAction> out;
  for (std::size_t flat = 0; flat < game.num_profiles(); ++flat) {
    const JointAction profile = game.profile_at(flat);
    bool stable = true;
    for (std::size_t i = 0; i < game.num_players() && stable; ++i) {
      const std::size_t base = flat - profile[i] * game.stride(i);
      double best = game.payoff_flat(i, base);
      for (std::size_t a = 1; a < game.num_actions(i); ++a) {
        best = std::max(best, game.payoff_flat(i, base + a * game.stride(i)));
      }
      stable = game.payoff_flat(i, flat) >= best - kTieTolerance;
    }
    if (stable) out.push_back(profile);
  }
  return out;
}

}  // namespace bgt
