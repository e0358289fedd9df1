// experiment.hpp: the experiment drivers behind the qctrl command line. Each
// returns plot-ready tables plus a JSON result block; timings are kept apart
// from the results so reruns can be compared bitwise.

#pragma once

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "qctrl/config.hpp"
#include "qctrl/control.hpp"
#include "qctrl/dataset.hpp"
#include "qctrl/lstm.hpp"
#include "qctrl/solver.hpp"

namespace qctrl {

using Logger = std::function<void(const std::string&)>;

struct Output {
  nlohmann::json results = nlohmann::json::object();
  nlohmann::json timing = nlohmann::json::object();
  std::vector<std::pair<std::string, Table>> tables;
};

/// Runs fn(0..n-1) on up to `threads` workers. The first exception is rethrown.
template <typename F>
void parallel_for(std::size_t n, int threads, F&& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline nlohmann::json provenance(const RunConfig& cfg) {
  return {{"tool", "qctrl"}, {"version", kToolVersion}, {"run_config", to_json(cfg)}};
}

inline nlohmann::json summary_json(const RunConfig& cfg, const std::string& command, const Output& o) {
  nlohmann::json j = provenance(cfg);
  j["command"] = command;
  j["results"] = o.results;
  j["timing"] = o.timing;
  nlohmann::json files = nlohmann::json::array();
  for (const auto& [name, t] : o.tables) files.push_back(name + ".csv");
  j["files"] = files;
  return j;
}

/// Writes every table as <out>/<name>.csv and the summary as <out>/<command>_summary.json.
inline std::string write_output(const RunConfig& cfg, const std::string& command, const Output& o) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec) throw IoError("cannot create " + cfg.out_dir + ": " + ec.message());
  for (const auto& [name, table] : o.tables) write_text_file(cfg.out_dir + "/" + name + ".csv", table.to_csv());
  const std::string path = cfg.out_dir + "/" + command + "_summary.json";
  write_text_file(path, summary_json(cfg, command, o).dump(2) + "\n");
  return path;
}

// --------------------------- gen-data ---------------------------------------

/// Appends records to the dataset file until it holds cfg.n_samples. An existing
/// file is resumed (or grown, or cut) when its seed and data configuration match.
inline Output run_gen_data(const RunConfig& cfg, const Logger& log = {}) {
  const std::string path = cfg.dataset_file();
  const GenerationSpec spec = cfg.generation();
  const nlohmann::json header = provenance(cfg);
  std::vector<std::string> kept;
  std::size_t start = 0;

  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error&) {
        break;  // torn final line from an interrupted run
      }
      if (first) {
        first = false;
        if (!j.contains("qctrl_header")) throw IoError(path + ": missing header line");
        const auto& old = j["qctrl_header"]["run_config"];
        nlohmann::json old_data = old.value("data", nlohmann::json::object()), new_data = header["run_config"]["data"];
        old_data.erase("n_samples");
        new_data.erase("n_samples");
        if (old.value("seed", std::uint64_t{0}) != cfg.seed || old_data != new_data)
          throw ConfigError(path + " was generated with a different data configuration");
        continue;
      }
      if (start >= cfg.n_samples || record_from_json(j).id != start) break;
      kept.push_back(line);
      ++start;
    }
  }
  std::filesystem::create_directories(std::filesystem::path(path).parent_path().empty() ? "." : std::filesystem::path(path).parent_path());
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << nlohmann::json{{"qctrl_header", header}}.dump() << "\n";
    for (const auto& l : kept) out << l << "\n";
  }
  if (start > 0 && log) log("resuming " + path + " at sample " + std::to_string(start));

  std::ofstream out(path, std::ios::binary | std::ios::app);
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t block = 64 * static_cast<std::size_t>(cfg.threads);
  std::size_t next_report = (cfg.n_samples + 9) / 10;
  std::size_t outside = 0;
  double max_norm = 0.0;
  for (std::size_t lo = start; lo < cfg.n_samples; lo += block) {
    const std::size_t hi = std::min(cfg.n_samples, lo + block);
    std::vector<std::string> lines(hi - lo);
    std::vector<double> norms(hi - lo);
    std::mutex log_mu;
    parallel_for(hi - lo, cfg.threads, [&](std::size_t k) {
      const DatasetRecord r = generate_record(lo + k, cfg.seed, spec, [&](const std::string& msg) {
        std::lock_guard<std::mutex> lock(log_mu);
        if (log) log(msg);
      });
      lines[k] = to_jsonl_line(r);
      norms[k] = r.max_bloch_norm();
    });
    for (const auto& l : lines) out << l << "\n";
    for (double m : norms) {
      max_norm = std::max(max_norm, m);
      if (m > 1.0 + 1e-6) ++outside;
    }
    out.flush();
    if (!out) throw IoError("write failed: " + path);
    if (log && hi >= next_report) {
      log("gen-data: " + std::to_string(hi) + "/" + std::to_string(cfg.n_samples));
      next_report += (cfg.n_samples + 9) / 10;
    }
  }

  Output o;
  o.results = {{"dataset", path},
               {"n_samples", cfg.n_samples},
               {"resumed_from", start},
               {"generated_outside_ball", outside},
               {"generated_max_bloch_norm", max_norm}};
  o.timing = {{"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
  return o;
}

// --------------------------- train ------------------------------------------

inline Output run_train(const RunConfig& cfg, const Logger& log = {}) {
  const Dataset ds = load_dataset(cfg.dataset_file());
  const TrainingConfig tcfg = cfg.training_config();
  std::vector<double> seconds;
  const TrainResult res = train(ds.records, tcfg, [&](const EpochStats& st) {
    seconds.push_back(st.seconds);
    if (log)
      log("epoch " + std::to_string(st.epoch) + " train " + format_double(st.train_loss) + " val " +
          format_double(st.val_loss) + " (" + std::to_string(st.seconds) + " s)");
  });
  SurrogateModel model = res.model;
  model.metadata["provenance"] = provenance(cfg);
  model.metadata["dataset_header"] = ds.header;
  save_model(model, cfg.model_file());

  Output o;
  Table curve{{"epoch", "train_loss", "val_loss"}, {}};
  for (const auto& st : res.history) curve.add(st.epoch, st.train_loss, st.val_loss);
  o.tables.emplace_back("loss_curve", std::move(curve));
  o.results = {{"model", cfg.model_file()},
               {"n_params", model.param_count()},
               {"best_epoch", res.best_epoch},
               {"best_val_loss", res.best_val_loss},
               {"first_val_loss", res.history.empty() ? 0.0 : res.history.front().val_loss},
               {"test_loss", res.test_loss},
               {"n_records", ds.records.size()}};
  o.timing = {{"epoch_seconds", seconds}};
  return o;
}

// --------------------------- verify -----------------------------------------

inline const std::vector<std::string>& verify_scenarios() {
  static const std::vector<std::string> names{"rfs", "linear-sine", "sine-quench"};
  return names;
}

struct ScenarioSample {
  BathParams bath;
  ControlGrid coarse;
  std::vector<BlochVector> truth;  ///< on the coarse grid, truth[0] the initial state
};

/// Sample i of a verification scenario: bath drawn from the box, truth from RK4 at truth_dt.
inline ScenarioSample make_scenario(const RunConfig& cfg, const std::string& scenario, std::size_t i) {
  const auto& names = verify_scenarios();
  const auto it = std::find(names.begin(), names.end(), scenario);
  if (it == names.end()) throw ConfigError("unknown scenario '" + scenario + "'");
  Rng rng(derive_seed(cfg.seed, 102 + static_cast<std::uint64_t>(it - names.begin()), i));
  ScenarioSample out;
  out.bath = cfg.box.draw(rng);
  const double T = cfg.verify_t_total;
  if (scenario == "rfs") {
    out.coarse = rfs_sample(cfg.rfs, rng.next(), T, cfg.dt);
    out.truth = integrate_coarse(out.coarse, out.bath, cfg.truth_dt, cfg.solver);
    return out;
  }
  ControlGrid dense;
  if (scenario == "linear-sine") {
    const double intensity = ideal_sine_intensity(cfg.zero_index, cfg.pulse_tau);
    dense = make_grid([&](double t) { return t / T; }, [&](double t) { return sine_pulse(intensity, cfg.pulse_tau, t); }, T,
                      cfg.truth_dt);
  } else {
    dense = make_grid([&](double t) { return named_trajectory(TrajectoryShape::sine, t, T); },
                      [&](double t) { return rect_pulse(cfg.quench_intensity, cfg.quench_tau, t); }, T, cfg.truth_dt);
  }
  const std::size_t stride = stride_for(cfg.dt, cfg.truth_dt);
  SolverOptions opts = cfg.solver;
  opts.record_stride = stride;
  out.truth = evolve(projector(instantaneous_ground_state(std::clamp(dense.s_values.front(), 0.0, 1.0))), dense, out.bath, opts).bloch;
  out.coarse = dense.subsample(stride);
  return out;
}

/// Truth vs surrogate over the verification window. MSE per step is the squared
/// Euclidean error of the Bloch vector, averaged over samples.
inline Output run_verify(const RunConfig& cfg, const SurrogateModel& model, const std::string& scenario) {
  if (cfg.verify_samples == 0) throw ConfigError("verify: samples must be >= 1");
  if (std::abs(model.arch.dt - cfg.dt) > 1e-12) throw ConfigError("verify: model step differs from the configured dt");
  std::vector<ScenarioSample> samples(cfg.verify_samples);
  parallel_for(samples.size(), cfg.threads, [&](std::size_t i) { samples[i] = make_scenario(cfg, scenario, i); });

  const std::size_t n = samples.front().coarse.n_steps();
  LstmNetwork<double> net(model);
  std::vector<SequenceInput> seqs;
  for (const auto& s : samples) seqs.push_back({s.truth.front(), &s.coarse.s_values, &s.coarse.c_values, s.bath});
  net.forward(seqs, n);

  Table t{{"step", "t", "trained", "mse_mean", "mse_max", "truth_x", "truth_y", "truth_z", "pred_x", "pred_y", "pred_z"}, {}};
  double in_sum = 0.0, out_sum = 0.0, worst = 0.0;
  std::size_t in_n = 0, out_n = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto p = net.prediction(k);
    double sum = 0.0, mx = 0.0;
    for (std::size_t b = 0; b < samples.size(); ++b) {
      const BlochVector& tr = samples[b].truth[k + 1];
      const auto col = static_cast<Eigen::Index>(b);
      const double e = (p(0, col) - tr.x) * (p(0, col) - tr.x) + (p(1, col) - tr.y) * (p(1, col) - tr.y) +
                       (p(2, col) - tr.z) * (p(2, col) - tr.z);
      sum += e;
      mx = std::max(mx, e);
    }
    const double mean = sum / static_cast<double>(samples.size());
    const double time = static_cast<double>(k + 1) * cfg.dt;
    const bool trained = time <= cfg.train_t_total + 1e-9;
    (trained ? in_sum : out_sum) += mean;
    ++(trained ? in_n : out_n);
    worst = std::max(worst, mx);
    const BlochVector& t0 = samples[0].truth[k + 1];
    t.add(k + 1, time, trained ? 1 : 0, mean, mx, t0.x, t0.y, t0.z, p(0, 0), p(1, 0), p(2, 0));
  }
  Output o;
  o.tables.emplace_back("verify_" + scenario, std::move(t));
  o.results = {{"scenario", scenario},
               {"samples", samples.size()},
               {"t_total", cfg.verify_t_total},
               {"trained_window", cfg.train_t_total},
               {"mse_trained", in_n ? in_sum / static_cast<double>(in_n) : 0.0},
               {"mse_extrapolation", out_n ? nlohmann::json(out_sum / static_cast<double>(out_n)) : nlohmann::json(nullptr)},
               {"max_step_error", worst}};
  return o;
}

// --------------------------- scan-ttot --------------------------------------

/// Fidelity along linear s, no control, for every (coupling, T_tot) pair.
inline Output run_scan_ttot(const RunConfig& cfg, const std::shared_ptr<SurrogateEvaluator>& sur = {}) {
  struct Cell {
    double coupling, t_total;
    std::vector<double> times, fidelity;
  };
  std::vector<Cell> cells;
  for (double g : cfg.ttot_couplings)
    for (double T : cfg.ttot_values) cells.push_back({g, T, {}, {}});
  if (cfg.backend == Backend::surrogate && !sur) throw ConfigError("scan-ttot: surrogate backend needs a model");

  parallel_for(cells.size(), cfg.backend == Backend::surrogate ? 1 : cfg.threads, [&](std::size_t i) {
    Cell& c = cells[i];
    const BathParams bath{c.coupling, cfg.ttot_cutoff, cfg.ttot_temperature};
    const auto lin = [&](double t) { return t / c.t_total; };
    const auto zero = [](double) { return 0.0; };
    if (cfg.backend == Backend::rk4) {
      const ControlGrid dense = make_grid(lin, zero, c.t_total, cfg.truth_dt);
      SolverOptions opts = cfg.solver;
      opts.record_stride = stride_for(cfg.dt, cfg.truth_dt);
      const Trajectory tr = evolve(projector(instantaneous_ground_state(0.0)), dense, bath, opts);
      c.times = tr.times;
      c.fidelity = tr.fidelity;
    } else {
      const ControlGrid g = make_grid(lin, zero, c.t_total, sur->model().arch.dt);
      const auto pred = rollout(sur->model(), initial_bloch(g), g, bath);
      c.times.push_back(0.0);
      c.fidelity.push_back(1.0);
      for (std::size_t k = 0; k < pred.size(); ++k) {
        c.times.push_back(g.time(k + 1));
        c.fidelity.push_back(fidelity_from_prediction(pred[k], g.s_values[k + 1]));
      }
    }
  });

  Table t{{"coupling", "t_total", "t", "t_over_ttot", "fidelity"}, {}};
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& c : cells) {
    for (std::size_t k = 0; k < c.times.size(); ++k) t.add(c.coupling, c.t_total, c.times[k], c.times[k] / c.t_total, c.fidelity[k]);
    rows.push_back({{"coupling", c.coupling}, {"t_total", c.t_total}, {"final_fidelity", c.fidelity.back()}});
  }
  Output o;
  o.tables.emplace_back("scan_ttot", std::move(t));
  o.results = {{"backend", to_string(cfg.backend)}, {"cutoff", cfg.ttot_cutoff}, {"temperature", cfg.ttot_temperature}, {"rows", rows}};
  return o;
}

// --------------------------- optimization -----------------------------------

inline ControlContext make_context(const RunConfig& cfg, ControlKind which, Backend backend,
                                   const std::shared_ptr<SurrogateEvaluator>& sur) {
  ControlContext ctx;
  ctx.which = which;
  ctx.t_total = cfg.t_total;
  ctx.bath = cfg.bath;
  ctx.fixed = which == ControlKind::trajectory ? SignalSpec::zero() : SignalSpec{cfg.trajectory_shape};
  ctx.lambda = cfg.lambda;
  ctx.truth_dt = cfg.truth_dt;
  ctx.solver = cfg.solver;
  ctx.backend = backend;
  ctx.surrogate = sur;
  ctx.surrogate_double = cfg.surrogate_double;
  ctx.first_index = cfg.first_index;
  ctx.last_index = cfg.last_index;
  if (backend == Backend::surrogate && !sur) throw ConfigError("surrogate backend needs a model (--model)");
  return ctx;
}

struct OptimizationRun {
  OptimizeResult result;
  ControlContext ctx;
  double fidelity_rk4 = 0.0;
  nlohmann::json baselines;
};

/// One workflow step with baselines under the backend and under exact RK4.
///   trajectory: linear and sine schedules, c fixed at zero
///   pulse:      free evolution (c = 0) and the ideal sine pulse, s fixed
inline OptimizationRun optimize_with_baselines(const RunConfig& cfg, ControlKind which, Backend backend,
                                               const std::shared_ptr<SurrogateEvaluator>& sur, GradientMode mode) {
  OptimizationRun run{{}, make_context(cfg, which, backend, sur), 0.0, nlohmann::json::object()};
  ControlContext exact = run.ctx;
  exact.backend = Backend::rk4;
  const double intensity = ideal_sine_intensity(cfg.zero_index, cfg.pulse_tau);
  std::vector<std::pair<std::string, std::pair<SignalSpec, SignalSpec>>> base;
  if (which == ControlKind::trajectory) {
    run.result = optimize_trajectory(run.ctx, cfg.adam, mode);
    base = {{"linear", {SignalSpec::linear(), SignalSpec::zero()}}, {"sine", {SignalSpec{"sine"}, SignalSpec::zero()}}};
  } else {
    run.result = optimize_pulse(run.ctx, cfg.adam, intensity, cfg.pulse_tau, mode);
    base = {{"free", {SignalSpec{cfg.trajectory_shape}, SignalSpec::zero()}},
            {"ideal", {SignalSpec{cfg.trajectory_shape}, SignalSpec::sine_pulse(intensity, cfg.pulse_tau)}}};
  }
  run.fidelity_rk4 = rk4_fidelity(run.result.best, run.ctx);
  for (const auto& [name, sc] : base) {
    run.baselines[name] = {{"fidelity", signal_fidelity(sc.first, sc.second, run.ctx)},
                           {"fidelity_rk4", signal_fidelity(sc.first, sc.second, exact)}};
  }
  if (which == ControlKind::pulse) run.baselines["ideal"]["intensity"] = intensity;
  return run;
}

inline Output run_optimize(const RunConfig& cfg, ControlKind which, const std::shared_ptr<SurrogateEvaluator>& sur = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const OptimizationRun run = optimize_with_baselines(cfg, which, cfg.backend, sur, cfg.gradient_mode());
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const OptimizeResult& r = run.result;

  Table hist{{"iteration", "loss", "fidelity", "dr_max", "grad_norm"}, {}};
  for (const auto& h : r.history) hist.add(h.iteration, h.loss, h.fidelity, h.dr_max, h.grad_norm);

  // Exact re-simulation of the returned control next to the backend's own view.
  const ControlGrid dense = control_grid(r.best, run.ctx, cfg.truth_dt);
  SolverOptions opts = cfg.solver;
  opts.record_stride = stride_for(cfg.dt, cfg.truth_dt);
  const Trajectory tr = evolve(projector(instantaneous_ground_state(std::clamp(dense.s_values.front(), 0.0, 1.0))), dense, cfg.bath, opts);
  std::vector<double> f_sur;
  if (cfg.backend == Backend::surrogate) {
    const ControlGrid g = control_grid(r.best, run.ctx, sur->model().arch.dt);
    const auto pred = rollout(sur->model(), initial_bloch(g), g, cfg.bath);
    f_sur.push_back(1.0);
    for (std::size_t k = 0; k < pred.size(); ++k) f_sur.push_back(fidelity_from_prediction(pred[k], g.s_values[k + 1]));
  }
  Table ctl{{"t", "s", "c", "fidelity_rk4", "fidelity_surrogate"}, {}};
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    const std::size_t i = k * opts.record_stride;
    ctl.add(tr.times[k], dense.s_values[i], dense.c_values[i], tr.fidelity[k], f_sur.empty() ? std::string() : format_double(f_sur[k]));
  }

  const std::string name = to_string(which);
  Output o;
  o.tables.emplace_back("optimize_" + name + "_history", std::move(hist));
  o.tables.emplace_back("optimize_" + name + "_control", std::move(ctl));
  o.results = {{"which", name},
               {"backend", to_string(cfg.backend)},
               {"bath", {cfg.bath.coupling, cfg.bath.cutoff, cfg.bath.temperature}},
               {"coefficients", r.best.coefficients},
               {"first_index", r.best.first_index},
               {"best_iteration", r.best_iteration},
               {"loss", r.best_report.loss},
               {"fidelity", r.best_report.fidelity},
               {"fidelity_rk4", run.fidelity_rk4},
               {"backend_gap", std::abs(r.best_report.fidelity - run.fidelity_rk4)},
               {"dr_max", r.best_report.dr_max},
               {"lambda", r.best_report.lambda},
               {"initial_loss", r.initial_report.loss},
               {"initial_fidelity", r.initial_report.fidelity},
               {"baselines", run.baselines}};
  o.timing = {{"seconds", seconds}};
  return o;
}

// --------------------------- scan-improvement -------------------------------

inline void set_bath_param(BathParams& b, const std::string& param, double v) {
  if (param == "coupling") b.coupling = v;
  else if (param == "cutoff") b.cutoff = v;
  else if (param == "temperature") b.temperature = v;
  else throw ConfigError("unknown bath parameter '" + param + "'");
}

/// F_im = F_opt - F_baseline per grid value, baseline linear s (trajectory) or the ideal pulse.
inline Output run_scan_improvement(const RunConfig& cfg, const std::shared_ptr<SurrogateEvaluator>& sur = {}) {
  const ControlKind which = cfg.scan_which == "trajectory" ? ControlKind::trajectory : ControlKind::pulse;
  const std::string base = which == ControlKind::trajectory ? "linear" : "ideal";
  std::vector<OptimizationRun> runs(cfg.scan_grid.size());
  parallel_for(runs.size(), cfg.backend == Backend::surrogate ? 1 : cfg.threads, [&](std::size_t i) {
    RunConfig c = cfg;
    set_bath_param(c.bath, cfg.scan_param, cfg.scan_grid[i]);
    runs[i] = optimize_with_baselines(c, which, cfg.backend, sur, cfg.gradient_mode());
  });
  Table t{{cfg.scan_param, "f_baseline", "f_opt", "f_im", "f_baseline_rk4", "f_opt_rk4", "f_im_rk4", "dr_max", "best_iteration"}, {}};
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    const double fb = r.baselines[base]["fidelity"], fbr = r.baselines[base]["fidelity_rk4"];
    const double fo = r.result.best_report.fidelity;
    t.add(cfg.scan_grid[i], fb, fo, fo - fb, fbr, r.fidelity_rk4, r.fidelity_rk4 - fbr, r.result.best_report.dr_max, r.result.best_iteration);
    rows.push_back({{"value", cfg.scan_grid[i]}, {"f_baseline", fb}, {"f_opt", fo}, {"f_im", fo - fb}, {"f_opt_rk4", r.fidelity_rk4},
                    {"f_im_rk4", r.fidelity_rk4 - fbr}});
  }
  Output o;
  o.tables.emplace_back("scan_improvement_" + cfg.scan_which + "_" + cfg.scan_param, std::move(t));
  o.results = {{"which", cfg.scan_which}, {"param", cfg.scan_param}, {"baseline", base}, {"backend", to_string(cfg.backend)}, {"rows", rows}};
  return o;
}

// --------------------------- bench ------------------------------------------

/// Wall clock of K-iteration pulse optimizations: RK4 with finite differences against
/// the surrogate with reverse mode. Both report on the Δt grid; RK4 sub-steps at truth_dt.
/// Runs single-threaded.
inline Output run_bench(const RunConfig& cfg, const std::shared_ptr<SurrogateEvaluator>& sur, const Logger& log = {}) {
  if (!sur) throw ConfigError("bench needs a model (--model)");
  Table t{{"coupling", "iterations", "rk4_seconds", "surrogate_seconds", "ratio", "f_rk4", "f_surrogate", "f_surrogate_rk4"}, {}};
  nlohmann::json rows = nlohmann::json::array(), times = nlohmann::json::array();
  const double intensity = ideal_sine_intensity(cfg.zero_index, cfg.pulse_tau);
  for (double g : cfg.bench_couplings) {
    RunConfig c = cfg;
    c.bath.coupling = g;
    auto timed = [&](Backend b, GradientMode m) {
      const ControlContext ctx = make_context(c, ControlKind::pulse, b, sur);
      const auto t0 = std::chrono::steady_clock::now();
      OptimizeResult r = optimize_pulse(ctx, c.adam, intensity, c.pulse_tau, m);
      return std::pair(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), std::move(r));
    };
    const auto [t_rk4, r_rk4] = timed(Backend::rk4, GradientMode::finite_difference);
    const auto [t_sur, r_sur] = timed(Backend::surrogate, GradientMode::reverse);
    const double f_cross = rk4_fidelity(r_sur.best, make_context(c, ControlKind::pulse, Backend::rk4, sur));
    const bool report = cfg.adam.k_max > 0;
    const double ratio = t_rk4 / t_sur;
    t.add(g, cfg.adam.k_max, t_rk4, t_sur, report ? format_double(ratio) : std::string(), r_rk4.best_report.fidelity,
          r_sur.best_report.fidelity, f_cross);
    rows.push_back({{"coupling", g}, {"f_rk4", r_rk4.best_report.fidelity}, {"f_surrogate", r_sur.best_report.fidelity}, {"f_surrogate_rk4", f_cross}});
    times.push_back({{"coupling", g}, {"rk4_seconds", t_rk4}, {"surrogate_seconds", t_sur}, {"ratio", report ? nlohmann::json(ratio) : nlohmann::json(nullptr)}});
    if (log) log("bench: coupling " + format_double(g) + " rk4 " + std::to_string(t_rk4) + " s, surrogate " + std::to_string(t_sur) + " s");
  }
  Output o;
  o.tables.emplace_back("bench", std::move(t));
  o.results = {{"iterations", cfg.adam.k_max}, {"rows", rows}};
  o.timing = {{"rows", times}};
  return o;
}

}  // namespace qctrl
