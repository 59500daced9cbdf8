#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lnlab/lnlab.hpp"

namespace {

constexpr int kExitInput = 2;
constexpr int kExitIo = 3;

int run(const std::string& experiment, const std::string& config_path, std::optional<std::uint64_t> seed,
        std::optional<std::string> out, std::optional<std::uint64_t> replicas) {
  lnlab::ExperimentConfig cfg =
      config_path.empty() ? lnlab::ExperimentConfig{} : lnlab::load_config(config_path);
  cfg.experiment = experiment;
  if (seed) cfg.seed = *seed;
  if (out) cfg.out = *out;
  if (replicas) cfg.replicas = *replicas;
  const lnlab::ExperimentResult result = lnlab::run_experiment(cfg);
  lnlab::write_results(result, cfg.out);
  lnlab::write_config((std::filesystem::path(cfg.out) / "config.txt").string(), cfg);
  std::cout << lnlab::summary_text(result);
  std::cout << "wrote " << cfg.out << "/results.csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lnlab: label-noise SGD stability and generalization experiments"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed, replicas;
  std::optional<std::string> out;
  for (const auto& name : lnlab::experiment_names()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", config_path, "configuration file (key = value)");
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--replicas", replicas, "number of replicas N");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }
  try {
    return run(app.get_subcommands().front()->get_name(), config_path, seed, out, replicas);
  } catch (const lnlab::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
