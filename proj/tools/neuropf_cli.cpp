// neuropf command-line entry point.
//
//   neuropf info   --case C
//   neuropf solve  --case C --out DIR
//   neuropf train  --case C --out DIR [--config F] [--seed N] [--set k=v ...]
//   neuropf eval   --case C --checkpoint F --out DIR [--benchmark K]
//   neuropf ablate --case C --out DIR [--seeds 0,1,2]
//   neuropf export-figures-data --log trajectory_log.csv --report eval_report.json --out DIR
//
// Exit codes: 0 ok, 1 other failure, 2 bad path, 3 validation, 4 Newton did not
// converge, 5 training aborted.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "neuropf/admittance.hpp"
#include "neuropf/case_io.hpp"
#include "neuropf/errors.hpp"
#include "neuropf/evaluation.hpp"
#include "neuropf/network.hpp"
#include "neuropf/newton.hpp"
#include "neuropf/trainer.hpp"

namespace fs = std::filesystem;
using namespace neuropf;

namespace {

struct CliError {
  int code;
  std::string kind;
  std::string message;
};

struct Options {
  std::string case_path;
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::vector<std::string> sets;
  std::string checkpoint;
  std::string log_path;
  std::string report_path;
  std::string seeds = "0,1,2";
  int benchmark = 0;
};

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw CliError{2, "bad_path", std::string(what) + " not given"};
  if (!fs::is_regular_file(path)) throw CliError{2, "bad_path", std::string(what) + " not found: " + path};
}

fs::path out_path(const Options& o, const char* name) {
  fs::create_directories(o.out_dir);
  return fs::path(o.out_dir) / name;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

TrainingConfig build_config(const Options& o) {
  TrainingConfig cfg;
  if (!o.config_path.empty()) {
    require_file(o.config_path, "config");
    cfg = load_training_config(o.config_path);
  }
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects KEY=VALUE, got '" + kv + "'");
    apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  return cfg;
}

CaseData read_case(const Options& o) {
  require_file(o.case_path, "case");
  return load_case(o.case_path);
}

// Digest recorded in the first comment line of a CSV written by this tool.
std::string digest_from_csv(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  if (std::getline(in, line) && line.rfind("#", 0) == 0) {
    const auto k = line.find("config_digest=");
    if (k != std::string::npos) return line.substr(k + 14);
  }
  return "unknown";
}

int cmd_info(const Options& o) {
  const CaseData data = read_case(o);
  const ArchitectureSpec arch = auto_config(data);
  const auto& s = data.bus_sets;
  std::cout << "case=" << data.name << "\n"
            << "buses=" << data.buses.size() << "\n"
            << "branches=" << data.branches.size() << "\n"
            << "generators=" << data.gens.size() << "\n"
            << "base_MVA=" << data.base_MVA << "\n"
            << "slack_bus=" << data.buses[s.slack_idx].id << "\n"
            << "pv=" << s.pv_idxs.size() << "\n"
            << "pq=" << s.pq_idxs.size() << "\n"
            << "d_in=" << arch.d_in << "\n"
            << "d_out=" << arch.d_out << "\n"
            << "d_hidden=" << arch.d_hidden << "\n"
            << "layers=" << arch.layers << "\n"
            << "use_layernorm=" << (arch.use_layernorm ? "true" : "false") << "\n"
            << "params=" << NetworkParams(arch).size() << "\n";
  return 0;
}

int cmd_solve(const Options& o) {
  const CaseData data = read_case(o);
  const AdmittanceMatrix y = build_ybus(data);
  const NewtonResult r = solve_newton(data, y, base_injections(data));
  if (!r.converged) {
    std::cerr << "newton history (iteration, mismatch_inf):\n";
    for (std::size_t k = 0; k < r.history.size(); ++k) std::cerr << k << "," << fmt17(r.history[k]) << "\n";
    throw CliError{4, "newton_nonconvergence", r.diagnosis.empty() ? "Newton did not converge" : r.diagnosis};
  }
  const fs::path p = out_path(o, "solution.csv");
  std::ofstream os(p);
  os << "# neuropf " << NEUROPF_VERSION << " case=" << data.name << " iterations=" << r.iterations << "\n";
  os << "bus_id,Vm_pu,Va_deg\n";
  for (std::size_t i = 0; i < data.buses.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    os << data.buses[i].id << "," << fmt17(r.state.V[k]) << "," << fmt17(r.state.theta[k] * 180.0 / std::numbers::pi) << "\n";
  }
  std::cout << "converged iterations=" << r.iterations << " mismatch_inf=" << r.final_mismatch_inf << " -> "
            << p.string() << "\n";
  return 0;
}

Checkpoint make_checkpoint(const NetworkParams& params, const CaseData& data, const TrainingConfig& cfg, int epoch) {
  Checkpoint ck{params, {}};
  ck.metadata["case"] = data.name;
  ck.metadata["config"] = config_to_json(cfg);
  ck.metadata["config_digest"] = config_digest(cfg);
  ck.metadata["epoch"] = std::to_string(epoch);
  ck.metadata["version"] = NEUROPF_VERSION;
  return ck;
}

int cmd_train(const Options& o) {
  const CaseData data = read_case(o);
  const TrainingConfig cfg = build_config(o);
  const AdmittanceMatrix y = build_ybus(data);
  const ArchitectureSpec arch = auto_config(data, cfg.arch);
  const fs::path ckpt = out_path(o, "checkpoint.json");
  TrainHooks hooks;
  hooks.checkpoint = [&](const NetworkParams& p, int epoch) { save_checkpoint(ckpt, make_checkpoint(p, data, cfg, epoch)); };
  const TrainResult r = train(data, y, arch, cfg, hooks);
  const fs::path logp = out_path(o, "trajectory_log.csv");
  {
    std::ofstream os(logp);
    write_trajectory_log(os, r.log, config_digest(cfg));
  }
  if (r.aborted) throw CliError{5, "training_aborted", r.diagnosis};
  std::cout << "epochs=" << cfg.epochs << " initial_loss=" << r.initial_loss << " final_loss=" << r.final_loss
            << " -> " << ckpt.string() << ", " << logp.string() << "\n";
  return 0;
}

int cmd_eval(const Options& o) {
  const CaseData data = read_case(o);
  require_file(o.checkpoint, "checkpoint");
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  if (ck.params.arch().d_in != static_cast<int>(data.input_dim()) ||
      ck.params.arch().d_out != static_cast<int>(data.output_dim())) {
    throw ValidationError("checkpoint does not match case dimensions");
  }
  const AdmittanceMatrix y = build_ybus(data);
  const NeuralModel model(ck.params, data);
  const PerturbationVector u0{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(data.input_dim()))};
  const EvalReport rep = evaluate(model, data, y, u0);
  const auto it = ck.metadata.find("config_digest");
  const std::string digest = it == ck.metadata.end() ? "unknown" : it->second;
  {
    std::ofstream os(out_path(o, "eval_report.json"));
    os << report_to_json(rep) << "\n";
  }
  {
    std::ofstream os(out_path(o, "comparison.csv"));
    write_comparison_csv(os, rep, digest);
  }
  std::cout << "residual_norm=" << rep.residual_norm << " dV_max=" << rep.dV_max
            << " dtheta_max_deg=" << rep.dtheta_max_deg << " nn_time_s=" << rep.nn_inference_time_s
            << " newton_time_s=" << rep.newton_time_s << "\n";
  if (o.benchmark > 0) {
    const std::uint64_t seed = o.seed.value_or(0);
    Rng rng(seed);
    const Eigen::MatrixXd U = uniform_batch(data.input_dim(), static_cast<std::size_t>(o.benchmark), 0.1, rng);
    const BenchmarkResult b = batch_benchmark(model, data, y, U);
    std::cout << "benchmark k=" << b.k << " nn_time_s=" << b.nn_time_s << " newton_time_s=" << b.newton_time_s
              << " speedup=" << b.speedup << " newton_failures=" << b.newton_failures << "\n";
  }
  return 0;
}

int cmd_ablate(const Options& o) {
  const CaseData data = read_case(o);
  const TrainingConfig cfg = build_config(o);
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(o.seeds);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      seeds.push_back(std::stoull(tok));
    } catch (const std::exception&) {
      throw ValidationError("bad seed '" + tok + "' in --seeds");
    }
  }
  if (seeds.empty()) throw ValidationError("--seeds is empty");
  const AdmittanceMatrix y = build_ybus(data);
  const AblationTable t = ablation_sampling(data, y, auto_config(data, cfg.arch), cfg, seeds);
  const fs::path p = out_path(o, "ablation.csv");
  std::ofstream os(p);
  write_ablation_csv(os, t);
  write_ablation_csv(std::cout, t);
  return 0;
}

int cmd_export(const Options& o) {
  require_file(o.log_path, "trajectory log");
  require_file(o.report_path, "eval report");
  std::ifstream lin(o.log_path);
  const TrajectoryLog log = read_trajectory_log(lin);
  std::ifstream rin(o.report_path);
  std::stringstream buf;
  buf << rin.rdbuf();
  const EvalReport rep = report_from_json(buf.str());
  const auto files = export_figure_data(log, rep, digest_from_csv(o.log_path), o.out_dir);
  for (const auto& f : files) std::cout << f.string() << "\n";
  return 0;
}

void apply_threads(const Options& o) {
  int n = 0;
  if (o.threads) {
    n = *o.threads;
  } else if (const char* env = std::getenv("NEUROPF_THREADS")) {
    n = std::atoi(env);
  }
  if (n > 0) Eigen::setNbThreads(n);
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
    if (c == '"') c = '\'';
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neuropf: Newton-Raphson and label-free neural power-flow toolkit"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--case", o.case_path, "Case file (.m MATPOWER or .json native)");
    sub->add_option("--config", o.config_path, "Training config (JSON)");
    auto* out = sub->add_option("--out", o.out_dir, "Output directory");
    if (needs_out) out->required();
    sub->add_option("--seed", o.seed, "Seed for every stochastic component");
    sub->add_option("--threads", o.threads, "Thread cap (default: $NEUROPF_THREADS)");
    sub->add_option("--set", o.sets, "Config override KEY=VALUE (repeatable)");
  };
  auto* info = app.add_subcommand("info", "Print case summary and auto-configured architecture");
  common(info, false);
  auto* solve = app.add_subcommand("solve", "Newton-Raphson solve of the base case");
  common(solve, true);
  auto* trn = app.add_subcommand("train", "Train the neural solver");
  common(trn, true);
  auto* ev = app.add_subcommand("eval", "Compare a checkpoint with Newton at the base load");
  common(ev, true);
  ev->add_option("--checkpoint", o.checkpoint, "Checkpoint written by train")->required();
  ev->add_option("--benchmark", o.benchmark, "Also time K random scenarios, NN batch vs Newton");
  auto* abl = app.add_subcommand("ablate", "Sampling-strategy ablation");
  common(abl, true);
  abl->add_option("--seeds", o.seeds, "Comma-separated seeds");
  auto* exp = app.add_subcommand("export-figures-data", "Write figure CSV/JSON from stored outputs");
  common(exp, true);
  exp->add_option("--log", o.log_path, "trajectory_log.csv from train")->required();
  exp->add_option("--report", o.report_path, "eval_report.json from eval")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: code=3 kind=usage message=\"" << one_line(e.what()) << "\"\n";
    return 3;
  }

  try {
    apply_threads(o);
    if (*info) return cmd_info(o);
    if (*solve) return cmd_solve(o);
    if (*trn) return cmd_train(o);
    if (*ev) return cmd_eval(o);
    if (*abl) return cmd_ablate(o);
    if (*exp) return cmd_export(o);
  } catch (const CliError& e) {
    std::cerr << "error: code=" << e.code << " kind=" << e.kind << " message=\"" << one_line(e.message) << "\"\n";
    return e.code;
  } catch (const ValidationError& e) {
    std::cerr << "error: code=3 kind=validation message=\"" << one_line(e.what()) << "\"\n";
    return 3;
  } catch (const ParseError& e) {
    std::cerr << "error: code=3 kind=parse message=\"" << one_line(e.what()) << "\"\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: code=1 kind=internal message=\"" << one_line(e.what()) << "\"\n";
    return 1;
  }
  return 1;
}
