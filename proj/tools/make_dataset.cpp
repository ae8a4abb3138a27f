// Generates a synthetic JSON Lines choice dataset from a behavioral model.
// Games are random 2x2 with payoffs U[lo, hi]; the generating model is
// written next to the dataset as <out>.truth.json.

#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bgt/estimation.hpp"
#include "bgt/experiment.hpp"
#include "bgt/serialization.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Synthetic choice data generator"};
  std::string out_path;
  std::size_t n = 1000;
  double lambda = 2.0;
  double lo = -2.0;
  double hi = 2.0;
  std::uint64_t seed = 7;
  app.add_option("--out", out_path, "Dataset path (JSON Lines)")->required();
  app.add_option("-n", n, "Observations");
  app.add_option("--lambda", lambda, "Logit precision of the generating LogitQBR model");
  app.add_option("--lo", lo, "Payoff lower bound");
  app.add_option("--hi", hi, "Payoff upper bound");
  app.add_option("--seed", seed, "Seed for games and choices");
  CLI11_PARSE(app, argc, argv);

  return bgt::guarded([&] {
    std::mt19937_64 rng(seed);
    std::vector<bgt::NormalFormGame> games;
    games.reserve(n);
    for (std::size_t g = 0; g < n; ++g) games.push_back(bgt::random_game({2, 2}, lo, hi, rng));
    const bgt::BehavioralModel model = bgt::LogitQbrModel{lambda};
    const auto data = bgt::simulate_choices(model, games, seed + 1);
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + out_path + "'");
    bgt::write_dataset(out, data);
    std::ofstream truth(out_path + ".truth.json", std::ios::binary | std::ios::trunc);
    truth << bgt::Json{{"model", bgt::to_json(model)}, {"seed", seed}, {"observations", n},
                       {"payoff_range", {lo, hi}}}
                 .dump(2)
          << '\n';
    return bgt::kExitOk;
  });
}
