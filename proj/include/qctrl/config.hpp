// config.hpp: the declarative run configuration, presets and RFC-4180 CSV output.

#pragma once

#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "qctrl/adam.hpp"
#include "qctrl/control.hpp"
#include "qctrl/dataset.hpp"
#include "qctrl/error.hpp"
#include "qctrl/lstm.hpp"

namespace qctrl {

#ifdef QCTRL_VERSION
inline constexpr const char* kToolVersion = QCTRL_VERSION;
#else
inline constexpr const char* kToolVersion = "0.1.0";
#endif

struct RunConfig {
  std::string experiment = "qctrl";
  std::string preset = "desk";
  std::uint64_t seed = 1234;
  std::string out_dir = "out";
  Backend backend = Backend::rk4;
  bool deterministic = false;
  int threads = 1;

  // data generation
  BathBox box;
  RFSConfig rfs;
  std::size_t n_samples = 5000;
  double train_t_total = 2.5;
  double dt = 0.05;
  double truth_dt = 0.005;
  std::string dataset_path;  ///< empty: <out>/dataset.jsonl
  std::string model_path;    ///< empty: <out>/model.qclstm

  TrainingConfig training;
  SolverOptions solver;

  // control optimization
  double t_total = 5.0;
  BathParams bath{0.04, 4.0, 10.0};
  double lambda = 1e-3;
  AdamConfig adam;
  int first_index = 1;
  int last_index = 8;
  int zero_index = 3;  ///< ideal sine pulse: zero of J0 used
  double pulse_tau = 0.5;
  std::string trajectory_shape = "linear";  ///< fixed s during pulse optimization
  std::string gradient = "auto";            ///< auto | fd | reverse
  bool surrogate_double = false;

  // verify
  std::size_t verify_samples = 50;
  double verify_t_total = 5.0;
  double quench_intensity = 37.69911184307752;  ///< 12 pi
  double quench_tau = 2.0;

  // scan-ttot
  std::vector<double> ttot_couplings{0.0, 0.03};
  std::vector<double> ttot_values{3.0, 7.0, 10.0};
  double ttot_cutoff = 2.0;
  double ttot_temperature = 10.0;

  // scan-improvement
  std::string scan_which = "trajectory";
  std::string scan_param = "coupling";
  std::vector<double> scan_grid{0.01, 0.03, 0.05};

  // bench
  std::vector<double> bench_couplings{0.01, 0.03, 0.05};

  std::string dataset_file() const { return dataset_path.empty() ? out_dir + "/dataset.jsonl" : dataset_path; }
  std::string model_file() const { return model_path.empty() ? out_dir + "/model.qclstm" : model_path; }

  GenerationSpec generation() const {
    GenerationSpec g;
    g.box = box;
    g.rfs = rfs;
    g.t_total = train_t_total;
    g.dt = dt;
    g.truth_dt = truth_dt;
    return g;
  }

  TrainingConfig training_config() const {
    TrainingConfig t = training;
    t.seed = derive_seed(seed, 101, 0);
    t.arch.dt = dt;
    t.trained_t_total = train_t_total;
    return t;
  }

  GradientMode gradient_mode() const {
    if (gradient == "auto") return GradientMode::automatic;
    if (gradient == "fd") return GradientMode::finite_difference;
    if (gradient == "reverse") return GradientMode::reverse;
    throw ConfigError("unknown gradient provider '" + gradient + "'");
  }

  void validate() const {
    if (preset != "desk" && preset != "paper") throw ConfigError("unknown preset '" + preset + "'");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (n_samples == 0) throw ConfigError("n_samples must be >= 1");
    if (!(train_t_total > 0.0) || !(t_total > 0.0) || !(verify_t_total > 0.0)) throw ConfigError("time windows must be > 0");
    stride_for(dt, truth_dt);
    steps_for(train_t_total, dt);
    steps_for(verify_t_total, dt);
    rfs.validate();
    training_config().validate();
    bath.validate();
    adam.validate();
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (zero_index < 1 || !(pulse_tau > 0.0) || !(quench_tau > 0.0)) throw ConfigError("bad pulse parameters");
    parse_trajectory_shape(trajectory_shape);
    gradient_mode();
    if (scan_which != "trajectory" && scan_which != "pulse") throw ConfigError("scan_which must be trajectory or pulse");
    if (scan_param != "coupling" && scan_param != "cutoff" && scan_param != "temperature")
      throw ConfigError("scan_param must be coupling, cutoff or temperature");
    if (first_index < 1 || last_index < first_index) throw ConfigError("bad Fourier index range");
  }
};

inline void apply_preset(RunConfig& cfg, const std::string& name) {
  if (name == "desk") {
    cfg.n_samples = 5000;
    cfg.training.epochs = 50;
    cfg.training.batch_size = 16;
    cfg.training.final_learning_rate = 1e-4;
  } else if (name == "paper") {
    cfg.n_samples = 50000;
    cfg.training.epochs = 200;
    cfg.training.batch_size = 128;
    cfg.training.final_learning_rate = 0.0;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  cfg.preset = name;
  cfg.dt = 0.05;
}

namespace detail {

inline nlohmann::json window_json(const Window& w) { return nlohmann::json::array({w.lo, w.hi}); }

inline Window window_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("config: a window must be [lo, hi]");
  return {j[0].get<double>(), j[1].get<double>()};
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
  using nlohmann::json;
  auto opt_window = [](const std::optional<Window>& w) { return w ? detail::window_json(*w) : json(nullptr); };
  return {
      {"experiment", c.experiment},
      {"preset", c.preset},
      {"seed", c.seed},
      {"out_dir", c.out_dir},
      {"backend", to_string(c.backend)},
      {"deterministic", c.deterministic},
      {"threads", c.threads},
      {"data",
       {{"n_samples", c.n_samples},
        {"t_total", c.train_t_total},
        {"dt", c.dt},
        {"truth_dt", c.truth_dt},
        {"dataset_path", c.dataset_path},
        {"bath_box",
         {{"coupling", detail::window_json(c.box.coupling)},
          {"cutoff", detail::window_json(c.box.cutoff)},
          {"temperature", detail::window_json(c.box.temperature)}}},
        {"rfs",
         {{"k_min", c.rfs.k_min},
          {"k_max", c.rfs.k_max},
          {"amplitude", json::array({c.rfs.amp_min, c.rfs.amp_max})},
          {"frequency", json::array({c.rfs.freq_min, c.rfs.freq_max})},
          {"phase", json::array({c.rfs.phase_min, c.rfs.phase_max})},
          {"s_window", opt_window(c.rfs.s_window)},
          {"c_window", opt_window(c.rfs.c_window)},
          {"s_min_span_fraction", c.rfs.s_min_span_fraction},
          {"c_min_span_fraction", c.rfs.c_min_span_fraction}}}}},
      {"training",
       {{"learning_rate", c.training.learning_rate},
        {"epochs", c.training.epochs},
        {"batch_size", c.training.batch_size},
        {"split", json::array({c.training.train_fraction, c.training.val_fraction, c.training.test_fraction})},
        {"grad_clip", c.training.grad_clip},
        {"final_learning_rate", c.training.final_learning_rate},
        {"n_layers", c.training.arch.n_layers},
        {"hidden", c.training.arch.hidden},
        {"encoder_hidden", c.training.arch.encoder_hidden},
        {"model_path", c.model_path}}},
      {"solver",
       {{"ordering", c.solver.ordering == Ordering::standard ? "standard" : "as-printed"},
        {"symmetrize", c.solver.symmetrize},
        {"trace_divergence_tol", c.solver.trace_divergence_tol}}},
      {"control",
       {{"t_total", c.t_total},
        {"bath", json::array({c.bath.coupling, c.bath.cutoff, c.bath.temperature})},
        {"lambda", c.lambda},
        {"alpha", c.adam.alpha},
        {"beta1", c.adam.beta1},
        {"beta2", c.adam.beta2},
        {"epsilon", c.adam.epsilon},
        {"k_max", c.adam.k_max},
        {"fourier_indices", json::array({c.first_index, c.last_index})},
        {"zero_index", c.zero_index},
        {"pulse_tau", c.pulse_tau},
        {"trajectory_shape", c.trajectory_shape},
        {"gradient", c.gradient},
        {"surrogate_double", c.surrogate_double}}},
      {"verify",
       {{"samples", c.verify_samples},
        {"t_total", c.verify_t_total},
        {"quench_intensity", c.quench_intensity},
        {"quench_tau", c.quench_tau}}},
      {"scan_ttot",
       {{"couplings", c.ttot_couplings}, {"t_totals", c.ttot_values}, {"cutoff", c.ttot_cutoff}, {"temperature", c.ttot_temperature}}},
      {"scan_improvement", {{"which", c.scan_which}, {"param", c.scan_param}, {"grid", c.scan_grid}}},
      {"bench", {{"couplings", c.bench_couplings}}},
  };
}

/// Overrides the fields present in j. A summary file is accepted too: its
/// embedded "run_config" is used.
inline void apply_json(RunConfig& c, const nlohmann::json& in) {
  using detail::read;
  if (!in.is_object()) throw ConfigError("config: top level must be an object");
  const nlohmann::json& j = in.contains("run_config") ? in["run_config"] : in;
  read(j, "experiment", c.experiment);
  read(j, "preset", c.preset);
  read(j, "seed", c.seed);
  read(j, "out_dir", c.out_dir);
  if (j.contains("backend")) c.backend = parse_backend(j["backend"].get<std::string>());
  read(j, "deterministic", c.deterministic);
  read(j, "threads", c.threads);
  if (j.contains("data")) {
    const auto& d = j["data"];
    read(d, "n_samples", c.n_samples);
    read(d, "t_total", c.train_t_total);
    read(d, "dt", c.dt);
    read(d, "truth_dt", c.truth_dt);
    read(d, "dataset_path", c.dataset_path);
    if (d.contains("bath_box")) {
      const auto& b = d["bath_box"];
      if (b.contains("coupling")) c.box.coupling = detail::window_from(b["coupling"]);
      if (b.contains("cutoff")) c.box.cutoff = detail::window_from(b["cutoff"]);
      if (b.contains("temperature")) c.box.temperature = detail::window_from(b["temperature"]);
    }
    if (d.contains("rfs")) {
      const auto& r = d["rfs"];
      read(r, "k_min", c.rfs.k_min);
      read(r, "k_max", c.rfs.k_max);
      auto range = [&](const char* key, double& lo, double& hi) {
        if (!r.contains(key)) return;
        const Window w = detail::window_from(r[key]);
        lo = w.lo;
        hi = w.hi;
      };
      range("amplitude", c.rfs.amp_min, c.rfs.amp_max);
      range("frequency", c.rfs.freq_min, c.rfs.freq_max);
      range("phase", c.rfs.phase_min, c.rfs.phase_max);
      for (auto [key, slot] : {std::pair{"s_window", &c.rfs.s_window}, std::pair{"c_window", &c.rfs.c_window}})
        if (r.contains(key)) *slot = r[key].is_null() ? std::nullopt : std::optional<Window>(detail::window_from(r[key]));
      read(r, "s_min_span_fraction", c.rfs.s_min_span_fraction);
      read(r, "c_min_span_fraction", c.rfs.c_min_span_fraction);
    }
  }
  if (j.contains("training")) {
    const auto& t = j["training"];
    read(t, "learning_rate", c.training.learning_rate);
    read(t, "epochs", c.training.epochs);
    read(t, "batch_size", c.training.batch_size);
    if (t.contains("split")) {
      const auto f = t["split"].get<std::vector<double>>();
      if (f.size() != 3) throw ConfigError("config: training.split must have three fractions");
      c.training.train_fraction = f[0];
      c.training.val_fraction = f[1];
      c.training.test_fraction = f[2];
    }
    read(t, "grad_clip", c.training.grad_clip);
    read(t, "final_learning_rate", c.training.final_learning_rate);
    read(t, "n_layers", c.training.arch.n_layers);
    read(t, "hidden", c.training.arch.hidden);
    read(t, "encoder_hidden", c.training.arch.encoder_hidden);
    read(t, "model_path", c.model_path);
  }
  if (j.contains("solver")) {
    const auto& s = j["solver"];
    if (s.contains("ordering")) c.solver.ordering = parse_ordering(s["ordering"].get<std::string>());
    read(s, "symmetrize", c.solver.symmetrize);
    read(s, "trace_divergence_tol", c.solver.trace_divergence_tol);
  }
  if (j.contains("control")) {
    const auto& o = j["control"];
    read(o, "t_total", c.t_total);
    if (o.contains("bath")) {
      const auto b = o["bath"].get<std::vector<double>>();
      if (b.size() != 3) throw ConfigError("config: control.bath is [coupling, cutoff, temperature]");
      c.bath = {b[0], b[1], b[2]};
    }
    read(o, "lambda", c.lambda);
    read(o, "alpha", c.adam.alpha);
    read(o, "beta1", c.adam.beta1);
    read(o, "beta2", c.adam.beta2);
    read(o, "epsilon", c.adam.epsilon);
    read(o, "k_max", c.adam.k_max);
    if (o.contains("fourier_indices")) {
      const auto k = o["fourier_indices"].get<std::vector<int>>();
      if (k.size() != 2) throw ConfigError("config: control.fourier_indices is [first, last]");
      c.first_index = k[0];
      c.last_index = k[1];
    }
    read(o, "zero_index", c.zero_index);
    read(o, "pulse_tau", c.pulse_tau);
    read(o, "trajectory_shape", c.trajectory_shape);
    read(o, "gradient", c.gradient);
    read(o, "surrogate_double", c.surrogate_double);
  }
  if (j.contains("verify")) {
    const auto& v = j["verify"];
    read(v, "samples", c.verify_samples);
    read(v, "t_total", c.verify_t_total);
    read(v, "quench_intensity", c.quench_intensity);
    read(v, "quench_tau", c.quench_tau);
  }
  if (j.contains("scan_ttot")) {
    const auto& s = j["scan_ttot"];
    read(s, "couplings", c.ttot_couplings);
    read(s, "t_totals", c.ttot_values);
    read(s, "cutoff", c.ttot_cutoff);
    read(s, "temperature", c.ttot_temperature);
  }
  if (j.contains("scan_improvement")) {
    const auto& s = j["scan_improvement"];
    read(s, "which", c.scan_which);
    read(s, "param", c.scan_param);
    read(s, "grid", c.scan_grid);
  }
  if (j.contains("bench")) read(j["bench"], "couplings", c.bench_couplings);
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

/// Worker count: hardware concurrency capped by QCTRL_THREADS; 1 in deterministic mode.
inline int default_threads() {
  int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("QCTRL_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || cap < 1) throw ConfigError("QCTRL_THREADS must be a positive integer");
    n = std::min<int>(n, static_cast<int>(cap));
  }
  return n;
}

// --------------------------- CSV --------------------------------------------

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  template <typename... Cells>
  void add(const Cells&... cells) {
    std::vector<std::string> row;
    (row.push_back(cell(cells)), ...);
    if (row.size() != header.size()) throw ConfigError("table: row width differs from the header");
    rows.push_back(std::move(row));
  }

  std::string to_csv() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + csv_field(r[i]);
      out += "\r\n";
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
  }

 private:
  static std::string cell(double v) { return format_double(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(std::size_t v) { return std::to_string(v); }
  static std::string cell(const std::string& v) { return v; }
  static std::string cell(const char* v) { return v; }
};

}  // namespace qctrl
