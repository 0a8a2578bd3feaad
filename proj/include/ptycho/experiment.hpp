#pragma once

// Experiment orchestration behind the command-line tool: config parsing, solver dispatch,
// and the simulate / reconstruct / sweep / evaluate commands. Each command returns a
// process exit code (0 ok, 2 usage/config/IO, 3 non-finite iterate).

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "ptycho/dataset.hpp"
#include "ptycho/metrics.hpp"
#include "ptycho/parallel.hpp"
#include "ptycho/pmace.hpp"
#include "ptycho/sharp.hpp"
#include "ptycho/solver.hpp"

namespace ptycho {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Measurements { Auto, Clean, Noisy };

inline Measurements parse_measurements(const std::string& s) {
  if (s == "auto") return Measurements::Auto;
  if (s == "clean") return Measurements::Clean;
  if (s == "noisy") return Measurements::Noisy;
  throw ConfigError("solver.measurements must be auto, clean or noisy (got '" + s + "')");
}

inline std::string to_string(Measurements m) {
  switch (m) {
    case Measurements::Clean: return "clean";
    case Measurements::Noisy: return "noisy";
    default: return "auto";
  }
}

struct SolverConfig {
  std::string name = "pmace";  // pmace | sharp | sharp_plus
  double alpha = 0.0;
  double rho = 0.5;
  double kappa = 1.25;
  double beta = 0.5;
  std::size_t iterations = 100;
  InitMode init = InitMode::Ones;
  std::uint64_t init_seed = 0;
  Measurements measurements = Measurements::Auto;
};

/// Either an explicit value list or a log10-spaced range [10^log_min, 10^log_max].
struct SweepConfig {
  std::string param = "alpha";
  std::vector<double> values;
  std::optional<double> log_min, log_max;
  std::size_t count = 0;

  std::vector<double> resolved() const {
    if (!values.empty()) return values;
    if (!log_min || !log_max || count == 0) return {};
    if (count == 1) return {std::pow(10.0, *log_min)};
    std::vector<double> v(count);
    for (std::size_t i = 0; i < count; ++i)
      v[i] = std::pow(10.0, *log_min + (*log_max - *log_min) * static_cast<double>(i) /
                                           static_cast<double>(count - 1));
    return v;
  }
};

struct ExperimentConfig {
  SimConfig sim;
  SolverConfig solver;
  SweepConfig sweep;
  std::string output = "out";
  std::string dataset;
  std::size_t workers = 0;  // 0: available parallelism
  std::size_t eval_every = 10;
  bool record_timing = true;

  std::size_t resolved_workers() const { return workers == 0 ? default_workers() : workers; }
};

namespace detail {

inline void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : obj.items())
    if (!known.count(key)) throw ConfigError("unknown config key '" + where + "." + key + "'");
}

template <class T>
void read_key(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + where + "." + key + "' has the wrong type");
  }
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  detail::reject_unknown(j, {"sim", "solver", "sweep", "output", "dataset", "workers", "eval_every", "record_timing"}, "config");
  detail::read_key(j, "output", c.output, "config");
  detail::read_key(j, "dataset", c.dataset, "config");
  detail::read_key(j, "workers", c.workers, "config");
  detail::read_key(j, "eval_every", c.eval_every, "config");
  detail::read_key(j, "record_timing", c.record_timing, "config");
  if (c.eval_every == 0) throw ConfigError("eval_every must be positive");

  if (j.contains("sim")) {
    const json& s = j.at("sim");
    detail::reject_unknown(s, {"image_rows", "image_cols", "probe_size", "grid_rows", "grid_cols", "spacing",
                               "peak_photon_rate", "seed", "noise", "normalization"}, "sim");
    detail::read_key(s, "image_rows", c.sim.image_rows, "sim");
    detail::read_key(s, "image_cols", c.sim.image_cols, "sim");
    detail::read_key(s, "probe_size", c.sim.probe_size, "sim");
    detail::read_key(s, "grid_rows", c.sim.grid.rows, "sim");
    detail::read_key(s, "grid_cols", c.sim.grid.cols, "sim");
    detail::read_key(s, "spacing", c.sim.grid.spacing, "sim");
    detail::read_key(s, "peak_photon_rate", c.sim.peak_photon_rate, "sim");
    detail::read_key(s, "seed", c.sim.seed, "sim");
    detail::read_key(s, "noise", c.sim.noise, "sim");
    std::string norm = to_string(c.sim.normalization);
    detail::read_key(s, "normalization", norm, "sim");
    try {
      c.sim.normalization = parse_normalization(norm);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }

  if (j.contains("solver")) {
    const json& s = j.at("solver");
    detail::reject_unknown(s, {"name", "alpha", "rho", "kappa", "beta", "iterations", "init", "init_seed",
                               "measurements"}, "solver");
    detail::read_key(s, "name", c.solver.name, "solver");
    detail::read_key(s, "alpha", c.solver.alpha, "solver");
    detail::read_key(s, "rho", c.solver.rho, "solver");
    detail::read_key(s, "kappa", c.solver.kappa, "solver");
    detail::read_key(s, "beta", c.solver.beta, "solver");
    detail::read_key(s, "iterations", c.solver.iterations, "solver");
    detail::read_key(s, "init_seed", c.solver.init_seed, "solver");
    std::string init = to_string(c.solver.init), meas = to_string(c.solver.measurements);
    detail::read_key(s, "init", init, "solver");
    detail::read_key(s, "measurements", meas, "solver");
    try {
      c.solver.init = parse_init_mode(init);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    c.solver.measurements = parse_measurements(meas);
  }

  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    detail::reject_unknown(s, {"param", "values", "log_min", "log_max", "count"}, "sweep");
    detail::read_key(s, "param", c.sweep.param, "sweep");
    detail::read_key(s, "values", c.sweep.values, "sweep");
    double lo = 0, hi = 0;
    if (s.contains("log_min")) detail::read_key(s, "log_min", lo, "sweep"), c.sweep.log_min = lo;
    if (s.contains("log_max")) detail::read_key(s, "log_max", hi, "sweep"), c.sweep.log_max = hi;
    detail::read_key(s, "count", c.sweep.count, "sweep");
  }
  return c;
}

inline json config_to_json(const ExperimentConfig& c) {
  json sweep = {{"param", c.sweep.param}};
  if (!c.sweep.values.empty()) sweep["values"] = c.sweep.values;
  if (c.sweep.log_min) sweep["log_min"] = *c.sweep.log_min;
  if (c.sweep.log_max) sweep["log_max"] = *c.sweep.log_max;
  if (c.sweep.count) sweep["count"] = c.sweep.count;
  return {
      {"sim",
       {{"image_rows", c.sim.image_rows},
        {"image_cols", c.sim.image_cols},
        {"probe_size", c.sim.probe_size},
        {"grid_rows", c.sim.grid.rows},
        {"grid_cols", c.sim.grid.cols},
        {"spacing", c.sim.grid.spacing},
        {"peak_photon_rate", c.sim.peak_photon_rate},
        {"seed", c.sim.seed},
        {"noise", c.sim.noise},
        {"normalization", to_string(c.sim.normalization)}}},
      {"solver",
       {{"name", c.solver.name},
        {"alpha", c.solver.alpha},
        {"rho", c.solver.rho},
        {"kappa", c.solver.kappa},
        {"beta", c.solver.beta},
        {"iterations", c.solver.iterations},
        {"init", to_string(c.solver.init)},
        {"init_seed", c.solver.init_seed},
        {"measurements", to_string(c.solver.measurements)}}},
      {"sweep", sweep},
      {"output", c.output},
      {"dataset", c.dataset},
      {"workers", c.workers},
      {"eval_every", c.eval_every},
      {"record_timing", c.record_timing},
  };
}

inline ExperimentConfig load_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

/// Command-line overrides; unset members leave the config untouched.
struct CommandOptions {
  std::optional<fs::path> config;
  std::optional<fs::path> dataset;
  std::optional<fs::path> out;
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> reconstruction;  // evaluate only
};

enum class SeedTarget { Simulation, Initialization };

inline ExperimentConfig resolve_config(const CommandOptions& opt, SeedTarget seed_target) {
  ExperimentConfig c = opt.config ? load_config(*opt.config) : ExperimentConfig{};
  if (opt.dataset) c.dataset = opt.dataset->string();
  if (opt.out) c.output = opt.out->string();
  if (opt.workers) c.workers = *opt.workers;
  if (opt.seed) {
    if (seed_target == SeedTarget::Simulation)
      c.sim.seed = *opt.seed;
    else
      c.solver.init_seed = *opt.seed;
  }
  return c;
}

struct RunOutcome {
  SolveResult result;
  double final_nrmse = 0.0;
  double seconds = 0.0;
  Measurements used = Measurements::Clean;
};

/// Runs the configured solver on a dataset, tracing NRMSE against its ground truth.
inline RunOutcome run_solver(const ExperimentConfig& cfg, const Dataset& data) {
  const SolverConfig& s = cfg.solver;
  Measurements used = s.measurements;
  if (used == Measurements::Auto) used = data.noisy ? Measurements::Noisy : Measurements::Clean;
  if (used == Measurements::Noisy && !data.noisy)
    throw ConfigError("solver.measurements is 'noisy' but the dataset was simulated without noise");
  const AmplitudeStack y = used == Measurements::Noisy ? data.descaled_noisy() : data.clean;

  const ComplexField init =
      initial_image(data.truth.rows(), data.truth.cols(), s.init, s.init_seed);
  const std::size_t workers = cfg.resolved_workers();
  const TraceReference ref{&data.truth};
  const Stopwatch clock;
  RunOutcome out;
  out.used = used;
  if (s.name == "pmace") {
    pmace::Params p;
    p.alpha = s.alpha;
    p.rho = s.rho;
    p.kappa = s.kappa;
    p.max_iters = s.iterations;
    p.eval_every = cfg.eval_every;
    p.workers = workers;
    out.result = pmace::mann_iterate(y, data.probe, data.grid, p, init, ref);
  } else if (s.name == "sharp" || s.name == "sharp_plus") {
    sharp::Params p;
    p.beta = s.beta;
    p.max_iters = s.iterations;
    p.eval_every = cfg.eval_every;
    p.variant = s.name == "sharp" ? sharp::Variant::Sharp : sharp::Variant::SharpPlus;
    p.workers = workers;
    out.result = sharp::sharp_iterate(y, data.probe, data.grid, p, init, ref);
  } else {
    throw ConfigError("unknown solver '" + s.name + "' (expected pmace, sharp or sharp_plus)");
  }
  out.seconds = cfg.record_timing ? clock.seconds() : 0.0;
  out.final_nrmse = nrmse_phase_aligned(out.result.image, data.truth, evaluation_mask(data.probe, data.grid));
  return out;
}

namespace detail {

inline Dataset load_configured_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset.empty()) throw ConfigError("no dataset given (use --dataset or the 'dataset' key)");
  return load_dataset(cfg.dataset);
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("cannot write " + path.string());
}

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace detail

inline int cmd_simulate(const CommandOptions& opt, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const ExperimentConfig cfg = resolve_config(opt, SeedTarget::Simulation);
    // --out wins; otherwise a configured dataset path names where the data should live.
    const std::string target = opt.out || cfg.dataset.empty() ? cfg.output : cfg.dataset;
    const Dataset data = simulate_dataset(cfg.sim, cfg.resolved_workers());
    save_dataset(target, data);
    out << "wrote " << data.clean.size() << " patterns" << (data.noisy ? " (clean + noisy)" : " (clean)")
        << " to " << target << '\n';
    return kExitOk;
  });
}

inline int cmd_reconstruct(const CommandOptions& opt, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const ExperimentConfig cfg = resolve_config(opt, SeedTarget::Initialization);
    const Dataset data = detail::load_configured_dataset(cfg);
    const RunOutcome run = run_solver(cfg, data);
    const fs::path dir = cfg.output;
    fs::create_directories(dir);
    cfld::save(dir / "reconstruction.cfld", run.result.image);
    run.result.trace.save_csv(dir / "trace.csv", cfg.record_timing);
    const json summary = {
        {"solver", cfg.solver.name},
        {"final_nrmse", run.final_nrmse},
        {"wall_seconds", run.seconds},
        {"iterations", cfg.solver.iterations},
        {"measurements", to_string(run.used)},
        {"config", config_to_json(cfg)},
    };
    detail::write_text(dir / "summary.json", summary.dump(2) + "\n");
    out << cfg.solver.name << " final_nrmse " << detail::format_g17(run.final_nrmse) << '\n';
    return kExitOk;
  });
}

inline int cmd_sweep(const CommandOptions& opt, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const ExperimentConfig base = resolve_config(opt, SeedTarget::Initialization);
    const std::string& param = base.sweep.param;
    if (param != "alpha" && param != "beta" && param != "kappa" && param != "rho")
      throw ConfigError("sweep.param must be one of alpha, beta, kappa, rho (got '" + param + "')");
    const bool is_pmace = base.solver.name == "pmace";
    if (is_pmace == (param == "beta"))
      throw ConfigError("sweep.param '" + param + "' does not apply to solver '" + base.solver.name + "'");
    const std::vector<double> values = base.sweep.resolved();
    if (values.empty()) throw ConfigError("sweep has no values");
    const Dataset data = detail::load_configured_dataset(base);

    const fs::path dir = base.output;
    fs::create_directories(dir);
    std::string csv = "value,final_nrmse,seconds\n";
    std::size_t best = 0;
    std::vector<double> nrmse(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      ExperimentConfig cfg = base;
      double& target = param == "alpha"   ? cfg.solver.alpha
                       : param == "beta"  ? cfg.solver.beta
                       : param == "kappa" ? cfg.solver.kappa
                                          : cfg.solver.rho;
      target = values[i];
      const RunOutcome run = run_solver(cfg, data);
      nrmse[i] = run.final_nrmse;
      if (nrmse[i] < nrmse[best]) best = i;
      char name[32];
      std::snprintf(name, sizeof name, "trace_%03zu.csv", i);
      run.result.trace.save_csv(dir / name, base.record_timing);
      char row[128];
      std::snprintf(row, sizeof row, "%.17g,%.17g,%.6f\n", values[i], run.final_nrmse, run.seconds);
      csv += row;
    }
    detail::write_text(dir / "sweep.csv", csv);
    const json summary = {{"param", param},
                          {"solver", base.solver.name},
                          {"values", values},
                          {"final_nrmse", nrmse},
                          {"argmin_index", best},
                          {"argmin_value", values[best]},
                          {"argmin_nrmse", nrmse[best]}};
    detail::write_text(dir / "sweep_summary.json", summary.dump(2) + "\n");
    out << "argmin " << param << ' ' << detail::format_g17(values[best]) << " final_nrmse "
        << detail::format_g17(nrmse[best]) << '\n';
    return kExitOk;
  });
}

inline int cmd_evaluate(const CommandOptions& opt, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const ExperimentConfig cfg = resolve_config(opt, SeedTarget::Initialization);
    if (!opt.reconstruction) throw ConfigError("evaluate needs a reconstruction file");
    const Dataset data = detail::load_configured_dataset(cfg);
    const ComplexField xhat = cfld::load(*opt.reconstruction);
    if (!xhat.same_shape(data.truth))
      throw DatasetError("reconstruction is " + std::to_string(xhat.rows()) + "x" + std::to_string(xhat.cols()) +
                         ", dataset image is " + std::to_string(data.truth.rows()) + "x" +
                         std::to_string(data.truth.cols()));
    const double e = nrmse_phase_aligned(xhat, data.truth, evaluation_mask(data.probe, data.grid));
    if (opt.out) {
      fs::create_directories(*opt.out);
      detail::write_text(*opt.out / "evaluation.json",
                         json{{"reconstruction", opt.reconstruction->string()}, {"nrmse", e}}.dump(2) + "\n");
    }
    out << "nrmse " << detail::format_g17(e) << '\n';
    return kExitOk;
  });
}

}  // namespace ptycho
