// qctrl: dataset generation, surrogate training, verification, scans,
// two-step optimization and the runtime benchmark.

#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "qctrl/experiment.hpp"

namespace {

using namespace qctrl;

struct Flags {
  std::optional<std::string> config, out, preset, backend, ordering, model, dataset;
  std::optional<std::uint64_t> seed;
  bool deterministic = false, symmetrize = false;

  std::optional<std::size_t> samples;
  std::optional<int> epochs, batch, k_max;
  std::optional<double> lr, coupling, cutoff, temperature, t_total, lambda, alpha;
  std::optional<std::string> gradient, which, param;
  std::optional<std::vector<double>> grid, couplings, ttots;
  std::string scenario = "all";
};

template <typename T>
void set_if(const std::optional<T>& v, T& out) {
  if (v) out = *v;
}

RunConfig resolve(const Flags& f) {
  RunConfig cfg;
  nlohmann::json file;
  if (f.config) file = read_json_file(*f.config);
  const nlohmann::json& fj = file.contains("run_config") ? file["run_config"] : file;
  std::string preset = f.preset.value_or(fj.is_object() && fj.contains("preset") ? fj["preset"].get<std::string>() : "desk");
  apply_preset(cfg, preset);
  if (f.config) apply_json(cfg, file);
  if (f.preset) apply_preset(cfg, *f.preset);
  set_if(f.seed, cfg.seed);
  set_if(f.out, cfg.out_dir);
  if (f.backend) cfg.backend = parse_backend(*f.backend);
  if (f.ordering) cfg.solver.ordering = parse_ordering(*f.ordering);
  if (f.symmetrize) cfg.solver.symmetrize = true;
  if (f.deterministic) cfg.deterministic = true;
  set_if(f.model, cfg.model_path);
  set_if(f.dataset, cfg.dataset_path);
  set_if(f.samples, cfg.n_samples);
  set_if(f.epochs, cfg.training.epochs);
  set_if(f.batch, cfg.training.batch_size);
  set_if(f.lr, cfg.training.learning_rate);
  set_if(f.coupling, cfg.bath.coupling);
  set_if(f.cutoff, cfg.bath.cutoff);
  set_if(f.temperature, cfg.bath.temperature);
  set_if(f.t_total, cfg.t_total);
  set_if(f.lambda, cfg.lambda);
  set_if(f.alpha, cfg.adam.alpha);
  set_if(f.k_max, cfg.adam.k_max);
  set_if(f.gradient, cfg.gradient);
  set_if(f.which, cfg.scan_which);
  set_if(f.param, cfg.scan_param);
  set_if(f.grid, cfg.scan_grid);
  set_if(f.ttots, cfg.ttot_values);
  set_if(f.couplings, cfg.ttot_couplings);
  set_if(f.couplings, cfg.bench_couplings);
  cfg.threads = cfg.deterministic ? 1 : default_threads();
  cfg.validate();
  return cfg;
}

void log_line(const std::string& msg) { std::cerr << msg << std::endl; }

std::shared_ptr<SurrogateEvaluator> load_surrogate(const RunConfig& cfg, bool required) {
  if (!required && cfg.backend != Backend::surrogate) return nullptr;
  return std::make_shared<SurrogateEvaluator>(load_model(cfg.model_file()));
}

void finish(const RunConfig& cfg, const std::string& command, const Output& o) {
  const std::string path = write_output(cfg, command, o);
  std::cout << o.results.dump(2) << "\n" << "summary: " << path << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open-system adiabatic control workbench"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(kToolVersion));
  Flags f;
  app.add_option("--config", f.config, "JSON run config (a summary file is accepted)");
  app.add_option("--seed", f.seed, "master seed");
  app.add_option("--out", f.out, "output directory");
  app.add_option("--preset", f.preset, "desk | paper")->check(CLI::IsMember({"desk", "paper"}));
  app.add_option("--backend", f.backend, "rk4 | surrogate")->check(CLI::IsMember({"rk4", "surrogate"}));
  app.add_option("--ordering", f.ordering, "master-equation ordering")->check(CLI::IsMember({"standard", "as-printed"}));
  app.add_flag("--symmetrize", f.symmetrize, "re-hermitize rho after every RK4 step");
  app.add_flag("--deterministic", f.deterministic, "single worker; bitwise-reproducible outputs");
  app.add_option("--model", f.model, "model file (default <out>/model.qclstm)");
  app.add_option("--dataset", f.dataset, "dataset file (default <out>/dataset.jsonl)");

  auto* gen = app.add_subcommand("gen-data", "generate the RFS training set");
  gen->add_option("--samples", f.samples, "number of records");

  auto* tr = app.add_subcommand("train", "train the surrogate");
  tr->add_option("--epochs", f.epochs);
  tr->add_option("--batch", f.batch);
  tr->add_option("--lr", f.lr);

  auto* ver = app.add_subcommand("verify", "surrogate vs RK4 on the verification scenarios");
  ver->add_option("--scenario", f.scenario)->check(CLI::IsMember({"all", "rfs", "linear-sine", "sine-quench"}));

  auto* ttot = app.add_subcommand("scan-ttot", "fidelity along linear s for several total times");
  ttot->add_option("--ttots", f.ttots)->delimiter(',');
  ttot->add_option("--couplings", f.couplings)->delimiter(',');

  std::vector<CLI::App*> opt_cmds;
  for (const char* name : {"optimize-trajectory", "optimize-pulse", "scan-improvement", "bench"}) {
    auto* sc = app.add_subcommand(name);
    sc->add_option("--coupling", f.coupling);
    sc->add_option("--cutoff", f.cutoff);
    sc->add_option("--temperature", f.temperature);
    sc->add_option("--ttot", f.t_total);
    sc->add_option("--lambda", f.lambda);
    sc->add_option("--alpha", f.alpha);
    sc->add_option("--kmax", f.k_max);
    sc->add_option("--gradient", f.gradient)->check(CLI::IsMember({"auto", "fd", "reverse"}));
    opt_cmds.push_back(sc);
  }
  opt_cmds[0]->description("step one: optimize s(t) with c fixed");
  opt_cmds[1]->description("step two: optimize the zero-area pulse c(t) with s fixed");
  opt_cmds[2]->description("F_im over a bath-parameter grid");
  opt_cmds[2]->add_option("--which", f.which)->check(CLI::IsMember({"trajectory", "pulse"}));
  opt_cmds[2]->add_option("--param", f.param)->check(CLI::IsMember({"coupling", "cutoff", "temperature"}));
  opt_cmds[2]->add_option("--grid", f.grid)->delimiter(',');
  opt_cmds[3]->description("RK4 vs surrogate optimization wall clock");
  opt_cmds[3]->add_option("--couplings", f.couplings)->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg = resolve(f);
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "gen-data") {
      finish(cfg, cmd, run_gen_data(cfg, log_line));
    } else if (cmd == "train") {
      finish(cfg, cmd, run_train(cfg, log_line));
    } else if (cmd == "verify") {
      const SurrogateModel model = load_model(cfg.model_file());
      Output all;
      for (const auto& s : verify_scenarios()) {
        if (f.scenario != "all" && f.scenario != s) continue;
        Output o = run_verify(cfg, model, s);
        all.results[s] = o.results;
        for (auto& t : o.tables) all.tables.push_back(std::move(t));
      }
      finish(cfg, cmd, all);
    } else if (cmd == "scan-ttot") {
      finish(cfg, cmd, run_scan_ttot(cfg, load_surrogate(cfg, false)));
    } else if (cmd == "optimize-trajectory") {
      finish(cfg, cmd, run_optimize(cfg, ControlKind::trajectory, load_surrogate(cfg, false)));
    } else if (cmd == "optimize-pulse") {
      finish(cfg, cmd, run_optimize(cfg, ControlKind::pulse, load_surrogate(cfg, false)));
    } else if (cmd == "scan-improvement") {
      finish(cfg, cmd, run_scan_improvement(cfg, load_surrogate(cfg, false)));
    } else if (cmd == "bench") {
      cfg.threads = 1;
      finish(cfg, cmd, run_bench(cfg, load_surrogate(cfg, true), log_line));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
