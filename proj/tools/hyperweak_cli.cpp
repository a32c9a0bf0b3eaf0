// hyperweak_cli <subcommand> [--config path] [--seed u64] [--out dir] [--print-config]
// exit: 0 ok, 2 configuration error, 3 numerical-quality failure, 1 anything else

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "hyperweak/experiments.hpp"

using namespace hyperweak;

namespace {

int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::DecompositionQuality:
    case ErrorCode::ConstructionFailure:
    case ErrorCode::DivergentInput:
      return 3;
    case ErrorCode::Io:
      return 1;
    default:
      return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hyperweak experiments: distribution curves, covering statistics, atomic decompositions"};
  app.require_subcommand(1);
  std::string config_path, out;
  std::uint64_t seed = 0;
  bool print_config = false;
  app.add_option("--config", config_path, "configuration file (key = value with [sections])");
  auto* seed_opt = app.add_option("--seed", seed, "base seed");
  auto* out_opt = app.add_option("--out", out, "output directory");
  app.add_flag("--print-config", print_config, "print the effective configuration and exit");

  const std::vector<std::pair<std::string, std::string>> subs = {
      {"cubes", "pseudodyadic cube system, invariant report, adjacency statistic"},
      {"maximal", "distribution curve of the maximal operator"},
      {"area", "distribution curve of the area function"},
      {"square", "distribution curve of the square function"},
      {"riesz", "distribution curve of the double Riesz transform"},
      {"covering", "covering-lemma selection statistics over seeded families"},
      {"atoms", "atomic decomposition report"},
      {"hyperweak", "hyperweak curves for the standard family and the weak (1,1) probe"},
  };
  for (const auto& [name, help] : subs) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();

  try {
    ConfigTable table = default_config();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw Error(ErrorCode::Config, "cannot read config file " + config_path);
      table.merge(in, config_path);
    }
    if (*seed_opt) table.set("run", "seed", std::to_string(seed));
    if (*out_opt) table.set("run", "out", out);
    const ExperimentConfig cfg = load_config(table);
    if (print_config) {
      table.print(std::cout);
      return 0;
    }

    RunResult r;
    if (cmd == "cubes") r = run_cubes(cfg);
    else if (cmd == "covering") r = run_covering(cfg);
    else if (cmd == "atoms") r = run_atoms(cfg);
    else if (cmd == "hyperweak") r = run_hyperweak(cfg);
    else r = run_operator(cmd, cfg);

    for (const auto& n : r.notes) std::cout << n << '\n';
    for (const auto& f : r.files) std::cout << "wrote " << f << '\n';
    return r.status;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
