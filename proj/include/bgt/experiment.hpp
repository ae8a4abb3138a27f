#pragma once

// Batch experiment front-end: config ingestion and the simulate / fit /
// predict runners behind the command-line tool.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "bgt/behavior.hpp"
#include "bgt/error.hpp"
#include "bgt/estimation.hpp"
#include "bgt/fog_market.hpp"
#include "bgt/serialization.hpp"
#include "bgt/utility_transform.hpp"

namespace bgt {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitRuntime = 3;

// Environment variable consulted for the output directory when neither
// --out nor experiment.output_dir is set.
inline constexpr const char* kOutDirEnv = "BGT_OUT_DIR";

enum class Mode { Simulate, Fit, Predict };

inline std::string mode_name(Mode m) {
  switch (m) {
    case Mode::Simulate: return "simulate";
    case Mode::Fit: return "fit";
    case Mode::Predict: return "predict";
  }
  return "simulate";
}

struct ExperimentSpec {
  Mode mode = Mode::Simulate;
  fog::FogScenario scenario = fog::default_scenario();
  fog::PriceRule price_rule = fog::PriceRule::GradientAscent;
  std::optional<BehavioralModel> model;
  std::vector<std::uint64_t> seeds;
  std::vector<double> noise_sweep;
  std::vector<bool> averaging_sweep;
  std::string output_dir;
  std::string dataset_path;
  std::string game_path;
  std::size_t folds = 0;  // 0: no cross-validation
  std::uint64_t cv_seed = 0;
  std::vector<ParamBounds> bounds;  // one per free model parameter (fit)
  SearchOptions search;
  std::optional<ProspectParams> prospect;
  std::vector<SocialPrefParams> social;  // empty, one for all players, or one per player
  std::vector<Lottery> lotteries;
  std::size_t workers = 1;

  bool operator==(const ExperimentSpec&) const = default;
};

namespace config_detail {

using namespace json_detail;

inline Mode parse_mode(const std::string& s) {
  if (s == "simulate") return Mode::Simulate;
  if (s == "fit") return Mode::Fit;
  if (s == "predict") return Mode::Predict;
  throw ParseError("'experiment.mode' must be simulate, fit or predict", "experiment.mode");
}

inline std::string resolve_path(const std::string& p, const fs::path& base) {
  fs::path path(p);
  if (path.is_relative()) path = base / path;
  return fs::absolute(path).lexically_normal().string();
}

inline std::string resolve_input(const Json& exp, const std::string& key, const fs::path& base) {
  const std::string where = "experiment." + key;
  const std::string p = resolve_path(as_string(exp.at(key), where), base);
  if (!fs::exists(p)) throw ValidationError(where + ": file '" + p + "' does not exist", where);
  return p;
}

}  // namespace config_detail

// Parses and validates a config document. Relative paths resolve against
// `base_dir`. `expected` (the CLI subcommand) fills in a missing mode and
// must agree with an explicit one.
inline ExperimentSpec parse_config_json(const Json& doc, const fs::path& base_dir,
                                        std::optional<Mode> expected = std::nullopt) {
  using namespace config_detail;
  reject_unknown(doc, {"scenario", "model", "experiment", "prospect", "social"}, "");
  ExperimentSpec spec;
  const Json exp = doc.contains("experiment") ? doc.at("experiment") : Json::object();
  reject_unknown(exp,
                 {"mode", "seeds", "noise", "averaging", "price_rule", "output_dir", "dataset", "game", "folds",
                  "cv_seed", "bounds", "search", "workers", "lotteries"},
                 "experiment");

  if (exp.contains("mode")) {
    spec.mode = parse_mode(as_string(exp.at("mode"), "experiment.mode"));
    if (expected && *expected != spec.mode) {
      throw ValidationError("experiment.mode is '" + mode_name(spec.mode) + "' but the command is '" +
                                mode_name(*expected) + "'",
                            "experiment.mode");
    }
  } else if (expected) {
    spec.mode = *expected;
  }

  spec.scenario = scenario_from_json(doc.contains("scenario") ? doc.at("scenario") : Json::object());
  if (doc.contains("model")) spec.model = model_from_json(doc.at("model"));
  if (doc.contains("prospect")) spec.prospect = prospect_from_json(doc.at("prospect"));
  if (doc.contains("social")) {
    const Json& soc = doc.at("social");
    if (soc.is_array()) {
      for (std::size_t i = 0; i < soc.size(); ++i) {
        spec.social.push_back(social_from_json(soc[i], "social[" + std::to_string(i) + "]"));
      }
    } else {
      spec.social.push_back(social_from_json(soc));
    }
  }

  if (exp.contains("seeds")) {
    const Json& s = exp.at("seeds");
    if (!s.is_array()) throw ParseError("'experiment.seeds' must be an array", "experiment.seeds");
    for (const auto& x : s) {
      if (!x.is_number_unsigned()) {
        throw ParseError("'experiment.seeds' must hold nonnegative integers", "experiment.seeds");
      }
      spec.seeds.push_back(x.get<std::uint64_t>());
    }
  }
  spec.noise_sweep = exp.contains("noise") ? as_numbers(exp.at("noise"), "experiment.noise")
                                           : std::vector<double>{spec.scenario.noise_rho};
  if (exp.contains("averaging")) {
    const Json& a = exp.at("averaging");
    if (!a.is_array()) throw ParseError("'experiment.averaging' must be an array of booleans", "experiment.averaging");
    for (const auto& x : a) spec.averaging_sweep.push_back(as_bool(x, "experiment.averaging"));
  } else {
    spec.averaging_sweep = {spec.scenario.averaging};
  }
  for (double rho : spec.noise_sweep) {
    if (!(rho >= 0.0 && rho < 1.0)) throw ValidationError("experiment.noise: values must lie in [0,1)", "experiment.noise");
  }
  if (spec.noise_sweep.empty()) throw ValidationError("experiment.noise: must not be empty", "experiment.noise");
  if (spec.averaging_sweep.empty()) {
    throw ValidationError("experiment.averaging: must not be empty", "experiment.averaging");
  }

  const std::string rule = get_or<std::string>(exp, "price_rule", "experiment", "gradient", as_string);
  if (rule == "gradient") {
    spec.price_rule = fog::PriceRule::GradientAscent;
  } else if (rule == "foc") {
    spec.price_rule = fog::PriceRule::FocRoot;
  } else {
    throw ParseError("'experiment.price_rule' must be \"gradient\" or \"foc\"", "experiment.price_rule");
  }

  if (exp.contains("output_dir")) {
    spec.output_dir = resolve_path(as_string(exp.at("output_dir"), "experiment.output_dir"), base_dir);
  }
  if (exp.contains("dataset")) spec.dataset_path = resolve_input(exp, "dataset", base_dir);
  if (exp.contains("game")) spec.game_path = resolve_input(exp, "game", base_dir);
  spec.folds = get_or<std::size_t>(exp, "folds", "experiment", 0, as_count);
  if (spec.folds == 1) throw ValidationError("experiment.folds: must be 0 or >= 2", "experiment.folds");
  if (exp.contains("cv_seed")) {
    if (!exp.at("cv_seed").is_number_unsigned()) {
      throw ParseError("'experiment.cv_seed' must be a nonnegative integer", "experiment.cv_seed");
    }
    spec.cv_seed = exp.at("cv_seed").get<std::uint64_t>();
  }
  spec.workers = get_or<std::size_t>(exp, "workers", "experiment", 1, as_count);
  if (spec.workers == 0) throw ValidationError("experiment.workers: must be >= 1", "experiment.workers");

  if (exp.contains("search")) {
    const Json& s = exp.at("search");
    reject_unknown(s, {"grid_points", "refine_iters"}, "experiment.search");
    spec.search.grid_points = get_or<std::size_t>(s, "grid_points", "experiment.search", spec.search.grid_points, as_count);
    spec.search.refine_iters =
        get_or<std::size_t>(s, "refine_iters", "experiment.search", spec.search.refine_iters, as_count);
  }
  if (spec.search.grid_points < 3) {
    throw ValidationError("experiment.search.grid_points: must be >= 3", "experiment.search.grid_points");
  }

  if (spec.model) {
    const auto names = parameter_names(*spec.model);
    Json bj = exp.contains("bounds") ? exp.at("bounds") : Json::object();
    if (!bj.is_object()) throw ParseError("'experiment.bounds' must be an object", "experiment.bounds");
    for (auto it = bj.begin(); it != bj.end(); ++it) {
      if (std::find(names.begin(), names.end(), it.key()) == names.end()) {
        throw ParseError("unknown key 'experiment.bounds." + it.key() + "'", "experiment.bounds." + it.key());
      }
    }
    for (const auto& n : names) {
      ParamBounds b = default_bounds(n);
      if (bj.contains(n)) {
        const auto v = as_numbers(bj.at(n), "experiment.bounds." + n);
        if (v.size() != 2 || !(v[0] <= v[1])) {
          throw ValidationError("experiment.bounds." + n + ": must be [lo, hi] with lo <= hi", "experiment.bounds." + n);
        }
        b = {v[0], v[1]};
      }
      spec.bounds.push_back(b);
    }
  } else if (exp.contains("bounds")) {
    throw ValidationError("experiment.bounds: needs a model block", "experiment.bounds");
  }

  if (exp.contains("lotteries")) {
    const Json& ls = exp.at("lotteries");
    if (!ls.is_array()) throw ParseError("'experiment.lotteries' must be an array", "experiment.lotteries");
    for (const auto& l : ls) {
      reject_unknown(l, {"outcomes", "probs"}, "experiment.lotteries");
      try {
        spec.lotteries.emplace_back(as_numbers(require_key(l, "outcomes", "experiment.lotteries"), "experiment.lotteries"),
                                    as_numbers(require_key(l, "probs", "experiment.lotteries"), "experiment.lotteries"));
      } catch (const InvalidArgument& e) {
        throw ValidationError(std::string("experiment.lotteries: ") + e.what(), "experiment.lotteries");
      }
    }
  }

  switch (spec.mode) {
    case Mode::Simulate:
      if (spec.seeds.empty()) throw ValidationError("experiment.seeds: must not be empty", "experiment.seeds");
      break;
    case Mode::Fit:
      if (!spec.model) throw ValidationError("model: required for fit", "model");
      if (spec.dataset_path.empty()) throw ValidationError("experiment.dataset: required for fit", "experiment.dataset");
      break;
    case Mode::Predict:
      if (!spec.model) throw ValidationError("model: required for predict", "model");
      if (spec.game_path.empty()) throw ValidationError("experiment.game: required for predict", "experiment.game");
      break;
  }
  return spec;
}

inline ExperimentSpec parse_config(const std::string& path, std::optional<Mode> expected = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config '" + path + "'");
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  return parse_config_json(doc, fs::absolute(fs::path(path)).parent_path(), expected);
}

// Fully resolved config: every default made explicit. Re-parsing it yields
// an equal ExperimentSpec.
inline Json dump_resolved(const ExperimentSpec& spec) {
  Json exp{{"mode", mode_name(spec.mode)},
           {"seeds", spec.seeds},
           {"noise", spec.noise_sweep},
           {"price_rule", spec.price_rule == fog::PriceRule::GradientAscent ? "gradient" : "foc"},
           {"folds", spec.folds},
           {"cv_seed", spec.cv_seed},
           {"workers", spec.workers},
           {"search", {{"grid_points", spec.search.grid_points}, {"refine_iters", spec.search.refine_iters}}}};
  Json avg = Json::array();
  for (bool b : spec.averaging_sweep) avg.push_back(b);
  exp["averaging"] = avg;
  if (!spec.output_dir.empty()) exp["output_dir"] = spec.output_dir;
  if (!spec.dataset_path.empty()) exp["dataset"] = spec.dataset_path;
  if (!spec.game_path.empty()) exp["game"] = spec.game_path;
  if (spec.model) {
    Json b = Json::object();
    const auto names = parameter_names(*spec.model);
    for (std::size_t i = 0; i < names.size(); ++i) b[names[i]] = {spec.bounds[i].lo, spec.bounds[i].hi};
    exp["bounds"] = b;
  }
  if (!spec.lotteries.empty()) {
    Json ls = Json::array();
    for (const auto& l : spec.lotteries) ls.push_back({{"outcomes", l.outcomes}, {"probs", l.probs}});
    exp["lotteries"] = ls;
  }
  Json doc{{"scenario", to_json(spec.scenario)}, {"experiment", exp}};
  if (spec.model) doc["model"] = to_json(*spec.model);
  if (spec.prospect) doc["prospect"] = to_json(*spec.prospect);
  if (!spec.social.empty()) {
    Json soc = Json::array();
    for (const auto& s : spec.social) soc.push_back(to_json(s));
    doc["social"] = soc;
  }
  return doc;
}

// ---------------------------------------------------------------------------
// Output helpers

// Writes via a temporary sibling and renames into place.
inline void write_file_atomic(const fs::path& path, const std::string& contents) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << contents;
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

// --out flag, then experiment.output_dir, then $BGT_OUT_DIR, then ./out.
inline std::string resolve_output_dir(const ExperimentSpec& spec, const std::optional<std::string>& flag) {
  if (flag) return *flag;
  if (!spec.output_dir.empty()) return spec.output_dir;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return "out";
}

inline std::string trace_file_name(double rho, bool averaging, std::uint64_t seed) {
  return "trace_" + format_double(rho) + "_" + (averaging ? "1" : "0") + "_" + std::to_string(seed) + ".csv";
}

// ---------------------------------------------------------------------------
// Runners

// One negotiation per (noise, averaging, seed) cell. Writes one CSV per
// cell, summary.json with compute_metrics per (noise, averaging) and
// manifest.json listing every cell's status.
inline int run_simulate(const ExperimentSpec& spec, const fs::path& out_dir, std::ostream& err = std::cerr) {
  fs::create_directories(out_dir);
  struct Cell {
    double rho;
    bool averaging;
    std::uint64_t seed;
    std::optional<fog::NegotiationTrace> trace;
    std::string error;
  };
  std::vector<Cell> cells;
  for (double rho : spec.noise_sweep) {
    for (bool avg : spec.averaging_sweep) {
      for (std::uint64_t seed : spec.seeds) cells.push_back({rho, avg, seed, std::nullopt, {}});
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      Cell& c = cells[i];
      try {
        fog::FogScenario s = spec.scenario;
        s.noise_rho = c.rho;
        s.averaging = c.averaging;
        auto trace = fog::run_negotiation(s, spec.price_rule, c.seed);
        std::ostringstream csv;
        write_trace_csv(csv, trace);
        write_file_atomic(out_dir / trace_file_name(c.rho, c.averaging, c.seed), csv.str());
        c.trace = std::move(trace);
      } catch (const std::exception& e) {
        c.error = e.what();
      }
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(spec.workers, cells.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  Json summary_cells = Json::array();
  Json manifest = Json::array();
  bool failed = false;
  for (double rho : spec.noise_sweep) {
    for (bool avg : spec.averaging_sweep) {
      std::vector<fog::NegotiationTrace> group;
      for (const auto& c : cells) {
        if (c.rho == rho && c.averaging == avg && c.trace) group.push_back(*c.trace);
      }
      if (group.empty()) continue;
      Json j = to_json(fog::compute_metrics(group));
      j["noise_rho"] = rho;
      j["averaging"] = avg;
      summary_cells.push_back(j);
    }
  }
  for (const auto& c : cells) {
    Json m{{"file", trace_file_name(c.rho, c.averaging, c.seed)},
           {"noise_rho", c.rho},
           {"averaging", c.averaging},
           {"seed", c.seed},
           {"status", c.trace ? "ok" : "failed"}};
    if (c.trace) {
      m["converged"] = c.trace->converged;
      m["rounds"] = c.trace->rounds.size();
    } else {
      m["error"] = c.error;
      failed = true;
      err << "simulate: cell " << m["file"].get<std::string>() << " failed: " << c.error << '\n';
    }
    manifest.push_back(m);
  }
  const Json summary{{"price_rule", spec.price_rule == fog::PriceRule::GradientAscent ? "gradient" : "foc"},
                     {"cells", summary_cells}};
  write_file_atomic(out_dir / "summary.json", summary.dump(2) + "\n");
  write_file_atomic(out_dir / "manifest.json", Json{{"cells", manifest}, {"failed", failed}}.dump(2) + "\n");
  return failed ? kExitRuntime : kExitOk;
}

// Fits the model family to the dataset; writes fit_result.json.
inline int run_fit(const ExperimentSpec& spec, const fs::path& out_dir, std::ostream& out = std::cout) {
  const ObservationDataset data = read_dataset_file(spec.dataset_path);
  if (data.empty()) throw ValidationError("empty dataset", "experiment.dataset");
  if (spec.folds > data.size()) {
    throw ValidationError("experiment.folds: " + std::to_string(spec.folds) + " folds but only " +
                              std::to_string(data.size()) + " observations",
                          "experiment.folds");
  }
  FitResult fit = fit_mle(*spec.model, data, spec.bounds, spec.search);
  if (spec.folds >= 2) {
    fit.cv_score = cross_validate(*spec.model, data, spec.folds, spec.bounds, spec.search, spec.cv_seed).mean_score;
  }
  const Json j = to_json(fit, *spec.model);
  fs::create_directories(out_dir);
  write_file_atomic(out_dir / "fit_result.json", j.dump(2) + "\n");
  out << j.dump() << '\n';
  return kExitOk;
}

// Prints {"model": ..., "strategies": [[...] per player]} to `out`, plus
// prospect values of any configured lotteries.
inline int run_predict(const ExperimentSpec& spec, std::ostream& out = std::cout) {
  std::ifstream in(spec.game_path);
  if (!in) throw ParseError("cannot open game '" + spec.game_path + "'");
  Json gj;
  try {
    gj = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError(spec.game_path + ": " + e.what());
  }
  NormalFormGame game = game_from_json(gj);
  if (!spec.social.empty()) {
    std::vector<SocialPrefParams> per_player = spec.social;
    if (per_player.size() == 1) per_player.assign(game.num_players(), spec.social.front());
    if (per_player.size() != game.num_players()) {
      throw ValidationError("social: need one block or one per player", "social");
    }
    game = transform_game_social(game, per_player);
  }
  try {
    validate(*spec.model, &game);
  } catch (const InvalidParameter& e) {
    throw ValidationError(std::string("model: ") + e.what(), "model");
  }
  Json strategies = Json::array();
  for (std::size_t i = 0; i < game.num_players(); ++i) {
    strategies.push_back(predict(*spec.model, game, i).weights());
  }
  Json j{{"model", to_json(*spec.model)}, {"strategies", strategies}};
  if (!spec.lotteries.empty()) {
    const ProspectParams pp = spec.prospect.value_or(ProspectParams{});
    Json values = Json::array();
    for (const auto& l : spec.lotteries) values.push_back(pt_evaluate(l, pp));
    j["lottery_values"] = values;
  }
  out << j.dump() << '\n';
  return kExitOk;
}

// Maps library exceptions onto the documented exit codes.
template <typename F>
int guarded(F&& body, std::ostream& err = std::cerr) {
  try {
    return body();
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const InvalidParameter& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace bgt
