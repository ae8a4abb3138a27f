#pragma once

// JSON / JSON Lines / CSV encodings of games, models, datasets, scenarios,
// traces and fit results.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "bgt/behavior.hpp"
#include "bgt/error.hpp"
#include "bgt/estimation.hpp"
#include "bgt/fog_market.hpp"
#include "bgt/game.hpp"
#include "bgt/utility_transform.hpp"

namespace bgt {

using Json = nlohmann::json;

// Shortest decimal text that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw std::runtime_error("cannot format number");
  return std::string(buf, end);
}

namespace json_detail {

inline std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

inline const Json& require_key(const Json& obj, const std::string& key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw ParseError("missing key '" + join(where, key) + "'", join(where, key));
  }
  return obj.at(key);
}

inline void reject_unknown(const Json& obj, std::initializer_list<const char*> allowed,
                           const std::string& where) {
  if (!obj.is_object()) throw ParseError("'" + where + "' must be an object", where);
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!ok.count(it.key())) {
      throw ParseError("unknown key '" + join(where, it.key()) + "'", join(where, it.key()));
    }
  }
}

inline double as_number(const Json& v, const std::string& key) {
  if (!v.is_number()) throw ParseError("'" + key + "' must be a number", key);
  return v.get<double>();
}

inline std::size_t as_count(const Json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    throw ParseError("'" + key + "' must be a nonnegative integer", key);
  }
  return v.get<std::size_t>();
}

inline bool as_bool(const Json& v, const std::string& key) {
  if (!v.is_boolean()) throw ParseError("'" + key + "' must be a boolean", key);
  return v.get<bool>();
}

inline std::string as_string(const Json& v, const std::string& key) {
  if (!v.is_string()) throw ParseError("'" + key + "' must be a string", key);
  return v.get<std::string>();
}

inline std::vector<double> as_numbers(const Json& v, const std::string& key) {
  if (!v.is_array()) throw ParseError("'" + key + "' must be an array of numbers", key);
  std::vector<double> out;
  for (const auto& x : v) out.push_back(as_number(x, key));
  return out;
}

template <typename T, typename F>
T get_or(const Json& obj, const std::string& key, const std::string& where, T fallback, F convert) {
  if (!obj.contains(key)) return fallback;
  return convert(obj.at(key), join(where, key));
}

}  // namespace json_detail

// ---------------------------------------------------------------------------
// Games

inline Json to_json(const NormalFormGame& game) {
  Json payoffs = Json::object();
  for (std::size_t i = 0; i < game.num_players(); ++i) payoffs[std::to_string(i)] = game.payoffs(i);
  return Json{{"action_counts", game.action_counts()}, {"payoffs", payoffs}};
}

inline NormalFormGame game_from_json(const Json& j, const std::string& where = "game") {
  using namespace json_detail;
  reject_unknown(j, {"action_counts", "payoffs"}, where);
  const Json& counts_j = require_key(j, "action_counts", where);
  if (!counts_j.is_array()) throw ParseError("'" + join(where, "action_counts") + "' must be an array");
  std::vector<std::size_t> counts;
  for (const auto& c : counts_j) counts.push_back(as_count(c, join(where, "action_counts")));
  const Json& pay = require_key(j, "payoffs", where);
  if (!pay.is_object()) throw ParseError("'" + join(where, "payoffs") + "' must be an object");
  std::vector<std::vector<double>> payoffs;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const std::string key = std::to_string(i);
    payoffs.push_back(as_numbers(require_key(pay, key, join(where, "payoffs")), join(where, "payoffs." + key)));
  }
  if (pay.size() != counts.size()) throw ParseError("'" + join(where, "payoffs") + "' has extra players");
  try {
    return NormalFormGame(std::move(counts), std::move(payoffs));
  } catch (const InvalidArgument& e) {
    throw ValidationError(where + ": " + e.what(), where);
  }
}

// ---------------------------------------------------------------------------
// Behavioral models

namespace json_detail {

inline Json level0_to_json(const Level0Spec& l0) {
  if (!l0.custom) return "uniform";
  Json arr = Json::array();
  for (const auto& s : *l0.custom) arr.push_back(s.weights());
  return arr;
}

inline Level0Spec level0_from_json(const Json& j, const std::string& key) {
  if (j.is_string() && j.get<std::string>() == "uniform") return {};
  if (!j.is_array()) throw ParseError("'" + key + "' must be \"uniform\" or an array of strategies", key);
  StrategyProfile profile;
  try {
    for (const auto& s : j) profile.emplace_back(as_numbers(s, key));
  } catch (const InvalidArgument& e) {
    throw ValidationError(key + ": " + e.what(), key);
  }
  return {std::move(profile)};
}

inline Response response_from_json(const Json& params, const std::string& where) {
  const std::string kind = get_or<std::string>(params, "response", where, "exact", as_string);
  if (kind == "exact") return Response::exact();
  if (kind == "qbr") return Response::qbr(get_or<double>(params, "lambda", where, 1.0, as_number));
  throw ParseError("'" + join(where, "response") + "' must be \"exact\" or \"qbr\"", join(where, "response"));
}

inline void response_to_json(const Response& r, Json& params) {
  params["response"] = r.kind == Response::Kind::QBR ? "qbr" : "exact";
  if (r.kind == Response::Kind::QBR) params["lambda"] = r.lambda;
}

}  // namespace json_detail

inline std::string model_name(const BehavioralModel& model) {
  static const char* names[] = {"BestResponse", "EpsilonNash", "LogitQBR",
                                "LevelK", "CognitiveHierarchy", "NoisyIntrospection"};
  return names[model.index()];
}

inline Json to_json(const BehavioralModel& model) {
  Json params = Json::object();
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, EpsilonNashModel>) {
          params["epsilon"] = m.epsilon;
          params["no_nash_fallback"] = m.no_nash_fallback == NoNashFallback::Error ? "error" : "uniform";
        } else if constexpr (std::is_same_v<T, LogitQbrModel>) {
          params["lambda"] = m.lambda;
        } else if constexpr (std::is_same_v<T, LevelKModel>) {
          params["level_weights"] = m.level_weights;
          params["level0"] = json_detail::level0_to_json(m.level0);
          json_detail::response_to_json(m.response, params);
        } else if constexpr (std::is_same_v<T, CognitiveHierarchyModel>) {
          params["tau"] = m.tau;
          params["max_level"] = m.max_level;
          params["level0"] = json_detail::level0_to_json(m.level0);
          json_detail::response_to_json(m.response, params);
          params["target"] = m.target == CognitiveHierarchyModel::Target::TopLevel ? "top" : "population";
        } else if constexpr (std::is_same_v<T, NoisyIntrospectionModel>) {
          params["lambda0"] = m.lambda0;
          params["decay"] = m.decay;
          params["max_depth"] = m.max_depth;
        }
      },
      model);
  return Json{{"model", model_name(model)}, {"params", params}};
}

// Parses {"model": "<variant>", "params": {...}}; missing params take the
// struct defaults. Validates parameter ranges (ValidationError).
inline BehavioralModel model_from_json(const Json& j, const std::string& where = "model") {
  using namespace json_detail;
  reject_unknown(j, {"model", "params"}, where);
  const std::string name = as_string(require_key(j, "model", where), join(where, "model"));
  const Json params = j.contains("params") ? j.at("params") : Json::object();
  const std::string pw = join(where, "params");
  BehavioralModel model;
  if (name == "BestResponse") {
    reject_unknown(params, {}, pw);
    model = BestResponseModel{};
  } else if (name == "EpsilonNash") {
    reject_unknown(params, {"epsilon", "no_nash_fallback"}, pw);
    EpsilonNashModel m;
    m.epsilon = get_or<double>(params, "epsilon", pw, m.epsilon, as_number);
    const auto fb = get_or<std::string>(params, "no_nash_fallback", pw, "error", as_string);
    if (fb != "error" && fb != "uniform") {
      throw ParseError("'" + join(pw, "no_nash_fallback") + "' must be \"error\" or \"uniform\"",
                       join(pw, "no_nash_fallback"));
    }
    m.no_nash_fallback = fb == "error" ? NoNashFallback::Error : NoNashFallback::Uniform;
    model = m;
  } else if (name == "LogitQBR") {
    reject_unknown(params, {"lambda"}, pw);
    LogitQbrModel m;
    m.lambda = get_or<double>(params, "lambda", pw, m.lambda, as_number);
    model = m;
  } else if (name == "LevelK") {
    reject_unknown(params, {"level_weights", "level0", "response", "lambda"}, pw);
    LevelKModel m;
    m.level_weights = get_or<std::vector<double>>(params, "level_weights", pw, m.level_weights, as_numbers);
    if (params.contains("level0")) m.level0 = level0_from_json(params.at("level0"), join(pw, "level0"));
    m.response = response_from_json(params, pw);
    model = m;
  } else if (name == "CognitiveHierarchy") {
    reject_unknown(params, {"tau", "max_level", "level0", "response", "lambda", "target"}, pw);
    CognitiveHierarchyModel m;
    m.tau = get_or<double>(params, "tau", pw, m.tau, as_number);
    m.max_level = get_or<std::size_t>(params, "max_level", pw, m.max_level, as_count);
    if (params.contains("level0")) m.level0 = level0_from_json(params.at("level0"), join(pw, "level0"));
    m.response = response_from_json(params, pw);
    const auto target = get_or<std::string>(params, "target", pw, "top", as_string);
    if (target != "top" && target != "population") {
      throw ParseError("'" + join(pw, "target") + "' must be \"top\" or \"population\"", join(pw, "target"));
    }
    m.target = target == "top" ? CognitiveHierarchyModel::Target::TopLevel
                               : CognitiveHierarchyModel::Target::Population;
    model = m;
  } else if (name == "NoisyIntrospection") {
    reject_unknown(params, {"lambda0", "decay", "max_depth"}, pw);
    NoisyIntrospectionModel m;
    m.lambda0 = get_or<double>(params, "lambda0", pw, m.lambda0, as_number);
    m.decay = get_or<double>(params, "decay", pw, m.decay, as_number);
    m.max_depth = get_or<std::size_t>(params, "max_depth", pw, m.max_depth, as_count);
    model = m;
  } else {
    throw ParseError("unknown model '" + name + "'", join(where, "model"));
  }
  try {
    validate(model);
  } catch (const InvalidParameter& e) {
    throw ValidationError(where + ": " + e.what(), where);
  }
  return model;
}

// ---------------------------------------------------------------------------
// Utility transforms

inline Json to_json(const ProspectParams& p) {
  return Json{{"gain_exp", p.gain_exp},         {"loss_exp", p.loss_exp},
              {"loss_scale", p.loss_scale},     {"weight_curve", p.weight_curve},
              {"reference", p.reference}};
}

inline ProspectParams prospect_from_json(const Json& j, const std::string& where = "prospect") {
  using namespace json_detail;
  reject_unknown(j, {"gain_exp", "loss_exp", "loss_scale", "weight_curve", "reference"}, where);
  ProspectParams p;
  p.gain_exp = get_or<double>(j, "gain_exp", where, p.gain_exp, as_number);
  p.loss_exp = get_or<double>(j, "loss_exp", where, p.loss_exp, as_number);
  p.loss_scale = get_or<double>(j, "loss_scale", where, p.loss_scale, as_number);
  p.weight_curve = get_or<double>(j, "weight_curve", where, p.weight_curve, as_number);
  p.reference = get_or<double>(j, "reference", where, p.reference, as_number);
  try {
    validate(p);
  } catch (const InvalidParameter& e) {
    throw ValidationError(e.what(), where);
  }
  return p;
}

inline Json to_json(const SocialPrefParams& p) {
  return Json{{"w_selfish", p.w_selfish},
              {"w_altruism", p.w_altruism},
              {"w_inequity", p.w_inequity},
              {"w_envy", p.w_envy},
              {"inequity_metric", p.inequity_metric == InequityMetric::Range ? "range" : "mean_deviation"}};
}

inline SocialPrefParams social_from_json(const Json& j, const std::string& where = "social") {
  using namespace json_detail;
  reject_unknown(j, {"w_selfish", "w_altruism", "w_inequity", "w_envy", "inequity_metric"}, where);
  SocialPrefParams p;
  p.w_selfish = get_or<double>(j, "w_selfish", where, p.w_selfish, as_number);
  p.w_altruism = get_or<double>(j, "w_altruism", where, p.w_altruism, as_number);
  p.w_inequity = get_or<double>(j, "w_inequity", where, p.w_inequity, as_number);
  p.w_envy = get_or<double>(j, "w_envy", where, p.w_envy, as_number);
  const auto metric = get_or<std::string>(j, "inequity_metric", where, "range", as_string);
  if (metric != "range" && metric != "mean_deviation") {
    throw ParseError("'" + join(where, "inequity_metric") + "' must be \"range\" or \"mean_deviation\"",
                     join(where, "inequity_metric"));
  }
  p.inequity_metric = metric == "range" ? InequityMetric::Range : InequityMetric::MeanDeviation;
  try {
    validate(p);
  } catch (const InvalidParameter& e) {
    throw ValidationError(where + ": " + e.what(), where);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Fog scenario

inline Json to_json(const fog::FogScenario& s) {
  return Json{{"M", s.M},
              {"a", s.a},
              {"alpha", s.alpha},
              {"beta", s.beta},
              {"c_lower", s.c_lower},
              {"kappa", s.kappa},
              {"B", s.B},
              {"c_init", s.c_init},
              {"c_max", s.c_max},
              {"eta", s.eta},
              {"noise_rho", s.noise_rho},
              {"averaging", s.averaging},
              {"averaging_window", s.averaging_window},
              {"max_rounds", s.max_rounds},
              {"conv_tol", s.conv_tol},
              {"conv_window", s.conv_window},
              {"min_secant_step", s.min_secant_step}};
}

// Without "M" the heterogeneous 4-node default scenario is the base; with
// "M" every per-node vector defaults to the homogeneous values of
// fog::uniform_scenario. Explicit keys override the base. Validated.
inline fog::FogScenario scenario_from_json(const Json& j, const std::string& where = "scenario") {
  using namespace json_detail;
  reject_unknown(j,
                 {"M", "a", "alpha", "beta", "c_lower", "kappa", "B", "c_init", "c_max", "eta", "noise_rho",
                  "averaging", "averaging_window", "max_rounds", "conv_tol", "conv_window", "min_secant_step"},
                 where);
  fog::FogScenario s = fog::default_scenario();
  if (j.contains("M")) {
    const std::size_t M = as_count(j.at("M"), join(where, "M"));
    if (M == 0) throw ValidationError(join(where, "M") + ": must be positive", join(where, "M"));
    s = fog::uniform_scenario(M, s.B);
  }
  s.a = get_or<double>(j, "a", where, s.a, as_number);
  s.B = get_or<double>(j, "B", where, s.B, as_number);
  s.alpha = get_or<std::vector<double>>(j, "alpha", where, s.alpha, as_numbers);
  s.beta = get_or<std::vector<double>>(j, "beta", where, s.beta, as_numbers);
  s.c_lower = get_or<std::vector<double>>(j, "c_lower", where, s.c_lower, as_numbers);
  s.kappa = get_or<std::vector<double>>(j, "kappa", where, s.kappa, as_numbers);
  // c_init and c_max follow c_lower unless given
  if (j.contains("c_lower") && !j.contains("c_init")) s.c_init = s.c_lower;
  if (j.contains("c_lower") && !j.contains("c_max")) {
    s.c_max = s.c_lower;
    for (double& c : s.c_max) c *= 10.0;
  }
  s.c_init = get_or<std::vector<double>>(j, "c_init", where, s.c_init, as_numbers);
  s.c_max = get_or<std::vector<double>>(j, "c_max", where, s.c_max, as_numbers);
  s.eta = get_or<double>(j, "eta", where, s.eta, as_number);
  s.noise_rho = get_or<double>(j, "noise_rho", where, s.noise_rho, as_number);
  s.averaging = get_or<bool>(j, "averaging", where, s.averaging, as_bool);
  s.averaging_window = get_or<std::size_t>(j, "averaging_window", where, s.averaging_window, as_count);
  s.max_rounds = get_or<std::size_t>(j, "max_rounds", where, s.max_rounds, as_count);
  s.conv_tol = get_or<double>(j, "conv_tol", where, s.conv_tol, as_number);
  s.conv_window = get_or<std::size_t>(j, "conv_window", where, s.conv_window, as_count);
  s.min_secant_step = get_or<double>(j, "min_secant_step", where, s.min_secant_step, as_number);
  if (!j.contains("M")) s.M = s.alpha.size();
  try {
    fog::validate(s);
  } catch (const ValidationError& e) {
    throw ValidationError(where + "." + e.what(), join(where, e.key()));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Traces and metrics

// One row per node per round: round,node_id,price,demand,user_utility,fog_gain
inline void write_trace_csv(std::ostream& os, const fog::NegotiationTrace& trace) {
  os << "round,node_id,price,demand,user_utility,fog_gain\n";
  for (const auto& st : trace.rounds) {
    for (std::size_t m = 0; m < st.prices.size(); ++m) {
      os << st.round << ',' << m << ',' << format_double(st.prices[m]) << ',' << format_double(st.demands[m])
         << ',' << format_double(st.user_utility) << ',' << format_double(st.fog_gains[m]) << '\n';
    }
  }
}

inline Json to_json(const fog::MetricsSummary& m) {
  Json j{{"runs", m.runs},
         {"mean_final_user_utility", m.mean_final_user_utility},
         {"mean_final_fog_gain", m.mean_final_fog_gain},
         {"convergence_rate", m.convergence_rate},
         {"instability_index", m.instability_index}};
  j["mean_convergence_round"] = m.mean_convergence_round ? Json(*m.mean_convergence_round) : Json(nullptr);
  return j;
}

// ---------------------------------------------------------------------------
// Datasets and fits

inline Json to_json(const Observation& obs) {
  return Json{{"game", to_json(obs.game)}, {"player", obs.player}, {"action", obs.action}};
}

inline Observation observation_from_json(const Json& j) {
  using namespace json_detail;
  reject_unknown(j, {"game", "player", "action"}, "observation");
  Observation obs{game_from_json(require_key(j, "game", ""), "game"),
                  as_count(require_key(j, "player", ""), "player"),
                  as_count(require_key(j, "action", ""), "action")};
  try {
    obs.check();
  } catch (const InvalidArgument& e) {
    throw ValidationError(e.what());
  }
  return obs;
}

// JSON Lines, one observation per nonblank line. Reports every malformed
// line number in a single ParseError.
inline ObservationDataset read_dataset(std::istream& in, const std::string& name = "dataset") {
  ObservationDataset data;
  std::vector<std::size_t> bad;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      data.observations.push_back(observation_from_json(Json::parse(line)));
    } catch (const std::exception&) {
      bad.push_back(lineno);
    }
  }
  if (!bad.empty()) {
    std::string msg = name + ": malformed lines";
    for (std::size_t i = 0; i < bad.size(); ++i) msg += (i ? ", " : " ") + std::to_string(bad[i]);
    throw ParseError(msg);
  }
  return data;
}

inline ObservationDataset read_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset '" + path + "'");
  return read_dataset(in, path);
}

inline void write_dataset(std::ostream& os, const ObservationDataset& data) {
  for (const auto& obs : data.observations) os << to_json(obs).dump() << '\n';
}

inline Json to_json(const FitResult& fit, const BehavioralModel& family) {
  Json params = Json::object();
  for (std::size_t i = 0; i < fit.names.size(); ++i) params[fit.names[i]] = fit.params[i];
  Json j{{"model", model_name(family)},
         {"params", params},
         {"log_likelihood", fit.log_likelihood},
         {"evaluations", fit.evaluations},
         {"probability_floor", kProbabilityFloor},
         {"floored_observations", fit.floored_observations}};
  j["cv_score"] = fit.cv_score ? Json(*fit.cv_score) : Json(nullptr);
  return j;
}

}  // namespace bgt
