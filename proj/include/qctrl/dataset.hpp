// dataset.hpp: ground-truth trajectories for surrogate training, stored as JSON Lines.
//
// File layout: an optional first line {"qctrl_header": {...}} carrying provenance,
// then one record per line with fields
//   id, gamma_coupling, gamma_cutoff, temperature, dt, n_steps, s, c, bloch, truth_dt, seed
// s and c hold n_steps + 1 samples on the surrogate grid (step dt). The truth is
// integrated at truth_dt on the piecewise-linear interpolation of those samples,
// so a record is fully reproducible from its own stored controls.

#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "qctrl/dynamics.hpp"
#include "qctrl/error.hpp"
#include "qctrl/pulse.hpp"
#include "qctrl/random.hpp"
#include "qctrl/solver.hpp"

namespace qctrl {

struct BathBox {
  Window coupling{0.0, 0.05};
  Window cutoff{1.0, 30.0};
  Window temperature{5.0, 15.0};

  BathParams draw(Rng& rng) const {
    return {rng.uniform(coupling.lo, coupling.hi), rng.uniform(cutoff.lo, cutoff.hi),
            rng.uniform(temperature.lo, temperature.hi)};
  }
};

inline constexpr double kRecordNormTolerance = 0.1;

struct DatasetRecord {
  std::uint64_t id = 0;
  BathParams bath;
  double dt = 0.05;
  double truth_dt = 0.005;
  std::size_t n_steps = 0;
  std::vector<double> s;
  std::vector<double> c;
  std::vector<BlochVector> bloch;
  std::uint64_t seed = 0;

  ControlGrid controls() const { return {dt * static_cast<double>(n_steps), dt, s, c}; }

  /// Largest Bloch norm along the record.
  double max_bloch_norm() const {
    double m = 0.0;
    for (const auto& b : bloch) m = std::max(m, b.norm());
    return m;
  }

  /// The master equation is not completely positive: under strong fast driving the
  /// converged truth can leave the Bloch ball by a few percent. Records are kept as
  /// integrated; only norms beyond norm_tol are treated as corrupt.
  void validate(double norm_tol = kRecordNormTolerance) const {
    if (s.size() != n_steps + 1 || c.size() != n_steps + 1 || bloch.size() != n_steps + 1)
      throw IoError("dataset record " + std::to_string(id) + ": inconsistent array lengths");
    for (const auto& b : bloch)
      if (!(b.norm() <= 1.0 + norm_tol)) throw IoError("dataset record " + std::to_string(id) + ": Bloch norm beyond tolerance");
  }
};

/// Piecewise-linear refinement: `factor` sub-steps per original step.
inline ControlGrid upsample_linear(const ControlGrid& g, std::size_t factor) {
  if (factor == 0) throw ConfigError("upsample: factor must be >= 1");
  ControlGrid out{g.t_total, g.dt / static_cast<double>(factor), {}, {}};
  const std::size_t n = g.n_steps();
  out.s_values.reserve(n * factor + 1);
  out.c_values.reserve(n * factor + 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < factor; ++j) {
      const double w = static_cast<double>(j) / static_cast<double>(factor);
      out.s_values.push_back((1.0 - w) * g.s_values[i] + w * g.s_values[i + 1]);
      out.c_values.push_back((1.0 - w) * g.c_values[i] + w * g.c_values[i + 1]);
    }
  }
  out.s_values.push_back(g.s_values.back());
  out.c_values.push_back(g.c_values.back());
  return out;
}

inline std::size_t stride_for(double coarse_dt, double fine_dt) {
  const double r = coarse_dt / fine_dt;
  const double k = std::round(r);
  if (k < 1.0 || std::abs(r - k) > 1e-9) throw ConfigError("surrogate dt must be an integer multiple of the truth dt");
  return static_cast<std::size_t>(k);
}

/// Integrates coarse controls at truth_dt and returns the Bloch vectors on the coarse grid.
inline std::vector<BlochVector> integrate_coarse(const ControlGrid& coarse, const BathParams& bath, double truth_dt,
                                                 const SolverOptions& base = {}) {
  const std::size_t stride = stride_for(coarse.dt, truth_dt);
  const ControlGrid fine = upsample_linear(coarse, stride);
  SolverOptions opts = base;
  opts.record_stride = stride;
  const ComplexMatrix2 rho0 = projector(instantaneous_ground_state(std::clamp(coarse.s_values.front(), 0.0, 1.0)));
  return evolve(rho0, fine, bath, opts).bloch;
}

struct GenerationSpec {
  BathBox box;
  RFSConfig rfs;
  double t_total = 2.5;
  double dt = 0.05;
  double truth_dt = 0.005;
  int max_attempts = 3;
};

/// Record `id` under `master_seed`. Solver divergence redraws controls (and bath)
/// with the next attempt's seed, up to spec.max_attempts.
inline DatasetRecord generate_record(std::uint64_t id, std::uint64_t master_seed, const GenerationSpec& spec,
                                     const std::function<void(const std::string&)>& log = {}) {
  for (int attempt = 0; attempt < spec.max_attempts; ++attempt) {
    const std::uint64_t seed = derive_seed(master_seed, static_cast<std::uint64_t>(attempt), id);
    Rng rng(seed);
    DatasetRecord rec;
    rec.id = id;
    rec.seed = seed;
    rec.bath = spec.box.draw(rng);
    rec.dt = spec.dt;
    rec.truth_dt = spec.truth_dt;
    const ControlGrid g = rfs_sample(spec.rfs, rng.next(), spec.t_total, spec.dt);
    rec.n_steps = g.n_steps();
    rec.s = g.s_values;
    rec.c = g.c_values;
    try {
      rec.bloch = integrate_coarse(g, rec.bath, spec.truth_dt);
      return rec;
    } catch (const NumericalError& e) {
      if (log) log("sample " + std::to_string(id) + " attempt " + std::to_string(attempt) + ": " + e.what());
    }
  }
  throw NumericalError("sample " + std::to_string(id) + ": solver diverged on every attempt");
}

// --------------------------- JSON Lines I/O ---------------------------------

inline nlohmann::json to_json(const DatasetRecord& r) {
  nlohmann::json bloch = nlohmann::json::array();
  for (const auto& b : r.bloch) bloch.push_back({b.x, b.y, b.z});
  return {{"id", r.id},       {"gamma_coupling", r.bath.coupling},
          {"gamma_cutoff", r.bath.cutoff}, {"temperature", r.bath.temperature},
          {"dt", r.dt},       {"n_steps", r.n_steps},
          {"s", r.s},         {"c", r.c},
          {"bloch", bloch},   {"truth_dt", r.truth_dt},
          {"seed", r.seed}};
}

inline DatasetRecord record_from_json(const nlohmann::json& j) {
  try {
    DatasetRecord r;
    r.id = j.at("id").get<std::uint64_t>();
    r.bath = {j.at("gamma_coupling").get<double>(), j.at("gamma_cutoff").get<double>(),
              j.at("temperature").get<double>()};
    r.dt = j.at("dt").get<double>();
    r.n_steps = j.at("n_steps").get<std::size_t>();
    r.s = j.at("s").get<std::vector<double>>();
    r.c = j.at("c").get<std::vector<double>>();
    for (const auto& b : j.at("bloch")) r.bloch.push_back({b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>()});
    r.truth_dt = j.value("truth_dt", 0.005);
    r.seed = j.value("seed", std::uint64_t{0});
    r.validate();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed dataset record: ") + e.what());
  }
}

/// Serialized with full round-trip precision (nlohmann emits shortest exact doubles).
inline std::string to_jsonl_line(const DatasetRecord& r) { return to_json(r).dump(); }

struct Dataset {
  nlohmann::json header;  ///< provenance line, null when absent
  std::vector<DatasetRecord> records;
};

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path);
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw IoError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (j.contains("qctrl_header")) {
      ds.header = j["qctrl_header"];
      continue;
    }
    ds.records.push_back(record_from_json(j));
  }
  return ds;
}

}  // namespace qctrl
