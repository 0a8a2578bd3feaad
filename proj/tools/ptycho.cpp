// ptycho: simulate datasets, run PMACE / SHARP / SHARP+ reconstructions, sweep parameters,
// and evaluate reconstructions against ground truth.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "ptycho/experiment.hpp"

namespace {

struct Flags {
  std::string config, dataset, out, reconstruction;
  std::size_t workers = 0;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "Experiment config (JSON)");
  cmd->add_option("--dataset", f.dataset, "Dataset directory");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--workers", f.workers, "Worker threads (0 = available parallelism)");
  cmd->add_option("--seed", f.seed, "Seed override (simulation seed for simulate, init seed otherwise)");
}

ptycho::CommandOptions to_options(const CLI::App* cmd, const Flags& f) {
  ptycho::CommandOptions o;
  if (cmd->count("--config")) o.config = f.config;
  if (cmd->count("--dataset")) o.dataset = f.dataset;
  if (cmd->count("--out")) o.out = f.out;
  if (cmd->count("--workers")) o.workers = f.workers;
  if (cmd->count("--seed")) o.seed = f.seed;
  if (!f.reconstruction.empty()) o.reconstruction = f.reconstruction;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ptychographic reconstruction with PMACE and SHARP"};
  app.require_subcommand(1);
  Flags flags;
  CLI::App* simulate = app.add_subcommand("simulate", "Write a synthetic dataset");
  CLI::App* reconstruct = app.add_subcommand("reconstruct", "Run the configured solver on a dataset");
  CLI::App* sweep = app.add_subcommand("sweep", "Run the solver over a list of parameter values");
  CLI::App* evaluate = app.add_subcommand("evaluate", "Phase-aligned NRMSE of a reconstruction");
  for (CLI::App* cmd : {simulate, reconstruct, sweep, evaluate}) add_common(cmd, flags);
  evaluate->add_option("reconstruction", flags.reconstruction, "Reconstruction CFLD file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return ptycho::kExitUsage;
  }

  if (simulate->parsed()) return ptycho::cmd_simulate(to_options(simulate, flags), std::cout, std::cerr);
  if (reconstruct->parsed()) return ptycho::cmd_reconstruct(to_options(reconstruct, flags), std::cout, std::cerr);
  if (sweep->parsed()) return ptycho::cmd_sweep(to_options(sweep, flags), std::cout, std::cerr);
  return ptycho::cmd_evaluate(to_options(evaluate, flags), std::cout, std::cerr);
}
