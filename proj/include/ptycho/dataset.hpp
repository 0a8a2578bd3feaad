#pragma once

// Simulated dataset directory:
//   manifest.json          geometry, grid offsets, r_p, normalization, seed, scale factors
//   truth.cfld probe.cfld  ground truth transmittance and probe
//   clean/y_NNNN.cfld      noise-free amplitudes (imaginary parts zero)
//   noisy/y_NNNN.cfld      Poisson amplitudes in scaled-count units (only when noise is on)

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "ptycho/cfld.hpp"
#include "ptycho/field.hpp"
#include "ptycho/sim.hpp"

namespace ptycho {

namespace fs = std::filesystem;
using json = nlohmann::json;

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimConfig {
  std::size_t image_rows = 660;
  std::size_t image_cols = 660;
  std::size_t probe_size = 256;
  GridShape grid{8, 8, 56};
  double peak_photon_rate = 1e5;
  std::uint64_t seed = 0;
  bool noise = true;
  Normalization normalization = Normalization::GlobalMax;

  void validate() const {
    if (noise && !(peak_photon_rate > 0.0))
      throw std::invalid_argument("sim: peak_photon_rate must be positive when noise is on");
    (void)make_scan_grid(image_rows, image_cols, probe_size, grid);
  }
};

struct Manifest {
  SimConfig sim;
  std::vector<Offset> offsets;
  std::vector<double> scale_factors;  // sqrt(r_p / M) per pattern; empty when noise is off

  ScanGrid scan_grid() const {
    return ScanGrid(sim.image_rows, sim.image_cols, sim.probe_size, offsets);
  }
};

inline std::string amplitude_file_name(std::size_t j) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "y_%04zu.cfld", j);
  return buf;
}

inline json manifest_to_json(const Manifest& m) {
  json offsets = json::array();
  for (const auto& o : m.offsets) offsets.push_back({o.row, o.col});
  json j = {
      {"format", "ptycho-dataset"},
      {"version", 1},
      {"image", {{"rows", m.sim.image_rows}, {"cols", m.sim.image_cols}}},
      {"probe_size", m.sim.probe_size},
      {"grid",
       {{"rows", m.sim.grid.rows},
        {"cols", m.sim.grid.cols},
        {"spacing", m.sim.grid.spacing},
        {"offsets", offsets}}},
      {"peak_photon_rate", m.sim.peak_photon_rate},
      {"normalization", to_string(m.sim.normalization)},
      {"seed", m.sim.seed},
      {"noise", m.sim.noise},
      {"patterns", m.offsets.size()},
  };
  if (m.sim.noise) j["scale_factors"] = m.scale_factors;
  return j;
}

inline Manifest manifest_from_json(const json& j) {
  try {
    if (j.at("format") != "ptycho-dataset") throw DatasetError("manifest: unexpected format tag");
    if (j.at("version") != 1) throw DatasetError("manifest: unsupported version");
    Manifest m;
    m.sim.image_rows = j.at("image").at("rows");
    m.sim.image_cols = j.at("image").at("cols");
    m.sim.probe_size = j.at("probe_size");
    m.sim.grid = {j.at("grid").at("rows"), j.at("grid").at("cols"), j.at("grid").at("spacing")};
    m.sim.peak_photon_rate = j.at("peak_photon_rate");
    m.sim.normalization = parse_normalization(j.at("normalization"));
    m.sim.seed = j.at("seed");
    m.sim.noise = j.at("noise");
    for (const auto& o : j.at("grid").at("offsets")) m.offsets.push_back({o.at(0), o.at(1)});
    if (m.offsets.size() != j.at("patterns").get<std::size_t>())
      throw DatasetError("manifest: pattern count does not match offsets");
    if (m.sim.noise) m.scale_factors = j.at("scale_factors").get<std::vector<double>>();
    if (m.sim.noise && m.scale_factors.size() != m.offsets.size())
      throw DatasetError("manifest: scale factor count does not match patterns");
    return m;
  } catch (const json::exception& e) {
    throw DatasetError(std::string("manifest: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DatasetError(std::string("manifest: ") + e.what());
  }
}

struct Dataset {
  Manifest manifest;
  ScanGrid grid;
  ComplexField truth;
  ComplexField probe;
  AmplitudeStack clean;
  std::optional<AmplitudeStack> noisy;

  /// Noisy amplitudes divided by their scale factors, i.e. back in the units of `clean`.
  AmplitudeStack descaled_noisy() const {
    if (!noisy) throw DatasetError("dataset has no noisy measurements");
    AmplitudeStack y = *noisy;
    for (std::size_t j = 0; j < y.size(); ++j) {
      const double s = manifest.scale_factors[j];
      for (auto& v : y[j]) v = s > 0.0 ? v / s : 0.0;
    }
    return y;
  }
};

/// Covered region used for every reported NRMSE: pixels seen by a nonzero probe value.
inline MaskField evaluation_mask(const ComplexField& probe, const ScanGrid& grid) {
  return build_coverage(probe, grid, 1.0).covered;
}

namespace detail {
inline void save_stack(const fs::path& dir, const AmplitudeStack& y) {
  fs::create_directories(dir);
  for (std::size_t j = 0; j < y.size(); ++j) cfld::save(dir / amplitude_file_name(j), y[j]);
}

inline AmplitudeStack load_stack(const fs::path& dir, std::size_t count, std::size_t n) {
  AmplitudeStack y(count);
  for (std::size_t j = 0; j < count; ++j) {
    const fs::path p = dir / amplitude_file_name(j);
    if (!fs::exists(p)) throw DatasetError("missing amplitude file " + p.string());
    const ComplexField f = cfld::load(p);
    if (f.rows() != n || f.cols() != n)
      throw DatasetError(p.string() + ": pattern shape does not match manifest probe size");
    RealField r(n, n);
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (f[i].imag() != 0.0 || !(f[i].real() >= 0.0))
        throw DatasetError(p.string() + ": amplitudes must be nonnegative reals");
      r[i] = f[i].real();
    }
    y[j] = std::move(r);
  }
  if (fs::exists(dir / amplitude_file_name(count)))
    throw DatasetError(dir.string() + ": more amplitude files than manifest patterns");
  return y;
}
}  // namespace detail

inline void save_dataset(const fs::path& dir, const Dataset& d) {
  fs::create_directories(dir);
  {
    std::ofstream os(dir / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + (dir / "manifest.json").string());
    os << manifest_to_json(d.manifest).dump(2) << '\n';
    if (!os) throw IoError("cannot write " + (dir / "manifest.json").string());
  }
  cfld::save(dir / "truth.cfld", d.truth);
  cfld::save(dir / "probe.cfld", d.probe);
  detail::save_stack(dir / "clean", d.clean);
  if (d.noisy) {
    detail::save_stack(dir / "noisy", *d.noisy);
  } else if (fs::exists(dir / "noisy")) {
    fs::remove_all(dir / "noisy");
  }
}

inline Dataset load_dataset(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  std::ifstream is(mpath);
  if (!is) throw DatasetError("cannot open " + mpath.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw DatasetError(mpath.string() + ": " + e.what());
  }
  Manifest m = manifest_from_json(j);
  std::optional<ScanGrid> grid;
  try {
    grid.emplace(m.scan_grid());
  } catch (const std::exception& e) {
    throw DatasetError(std::string("manifest grid: ") + e.what());
  }
  ComplexField truth = cfld::load(dir / "truth.cfld");
  ComplexField probe = cfld::load(dir / "probe.cfld");
  if (truth.rows() != m.sim.image_rows || truth.cols() != m.sim.image_cols)
    throw DatasetError("truth.cfld shape does not match manifest");
  if (probe.rows() != m.sim.probe_size || probe.cols() != m.sim.probe_size)
    throw DatasetError("probe.cfld shape does not match manifest");
  AmplitudeStack clean = detail::load_stack(dir / "clean", m.offsets.size(), m.sim.probe_size);
  std::optional<AmplitudeStack> noisy;
  if (m.sim.noise)
    noisy = detail::load_stack(dir / "noisy", m.offsets.size(), m.sim.probe_size);
  return Dataset{std::move(m), std::move(*grid), std::move(truth), std::move(probe),
                 std::move(clean), std::move(noisy)};
}

/// Generates object, probe, grid and measurements for a simulation config.
inline Dataset simulate_dataset(const SimConfig& cfg, std::size_t workers = 1) {
  cfg.validate();
  ScanGrid grid = make_scan_grid(cfg.image_rows, cfg.image_cols, cfg.probe_size, cfg.grid);
  ComplexField truth = synth_object(cfg.image_rows, cfg.image_cols, cfg.seed);
  ComplexField probe = synth_probe(cfg.probe_size, cfg.seed);
  AmplitudeStack clean = forward_amplitude(truth, probe, grid, workers);
  Manifest m{cfg, grid.offsets(), {}};
  std::optional<AmplitudeStack> noisy;
  if (cfg.noise) {
    m.scale_factors = poisson_scale_factors(clean, cfg.peak_photon_rate, cfg.normalization);
    noisy = add_poisson_noise(clean, cfg.peak_photon_rate, cfg.normalization, cfg.seed, workers);
  }
  return Dataset{std::move(m), std::move(grid), std::move(truth), std::move(probe),
                 std::move(clean), std::move(noisy)};
}

}  // namespace ptycho
