#include "neuropf/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "neuropf/errors.hpp"
#include "neuropf/grad_engine.hpp"

namespace neuropf {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  }
  return m;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) f.push_back(cell);
  return f;
}

// Yields data lines after checking the header; skips comment lines.
template <typename Fn>
void read_csv(std::istream& is, const char* header, std::size_t fields, const char* what, Fn&& on_row) {
  std::string line;
  bool seen_header = false;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!seen_header) {
      if (line != header) throw ParseError(std::string(what) + ": unexpected header '" + line + "'");
      seen_header = true;
      continue;
    }
    const auto f = split_csv(line);
    if (f.size() != fields) {
      throw ParseError(std::string(what) + " line " + std::to_string(lineno) + ": expected " +
                       std::to_string(fields) + " fields");
    }
    try {
      on_row(f);
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(std::string(what) + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!seen_header) throw ParseError(std::string(what) + ": missing header");
}

}  // namespace

void StateModel::predict_batch(const MatrixXd& U, MatrixXd& V, MatrixXd& theta) const {
  for (Index k = 0; k < U.cols(); ++k) {
    const StateVector s = predict(PerturbationVector{U.col(k)});
    if (k == 0) {
      V.resize(s.V.size(), U.cols());
      theta.resize(s.theta.size(), U.cols());
    }
    V.col(k) = s.V;
    theta.col(k) = s.theta;
  }
}

StateVector NeuralModel::predict(const PerturbationVector& u) const {
  return decode(forward(params_, u), data_, params_.arch().theta_scale);
}

void NeuralModel::predict_batch(const MatrixXd& U, MatrixXd& V, MatrixXd& theta) const {
  decode_batch(forward_batch(params_, U), data_, params_.arch().theta_scale, V, theta);
}

NewtonOracleModel::NewtonOracleModel(const CaseData& data, const AdmittanceMatrix& y, NewtonOptions opts)
    : data_(data), y_(y), base_(base_injections(data)), opts_(opts) {}

StateVector NewtonOracleModel::predict(const PerturbationVector& u) const {
  const NewtonResult r = solve_newton(data_, y_, apply_perturbation(base_, u, data_), opts_);
  if (!r.converged) throw NumericalError("oracle Newton solve failed: " + r.diagnosis);
  return r.state;
}

double wrap_degrees(double deg) {
  double w = std::fmod(deg, 360.0);
  if (w <= -180.0) w += 360.0;
  if (w > 180.0) w -= 360.0;
  return w;
}

EvalReport evaluate(const StateModel& model, const CaseData& data, const AdmittanceMatrix& y,
                    const PerturbationVector& u, int timing_repeats) {
  EvalReport rep;
  rep.case_name = data.name;
  for (const auto& b : data.buses) rep.bus_ids.push_back(b.id);
  const PowerInjection spec = apply_perturbation(base_injections(data), u, data);

  const StateVector nn = model.predict(u);
  rep.residual_norm = residual_norm(mismatch(nn, spec, data, y));
  std::vector<double> times;
  for (int k = 0; k < timing_repeats; ++k) {
    const auto t0 = Clock::now();
    const StateVector s = model.predict(u);
    times.push_back(seconds_since(t0));
    if (s.V.size() != nn.V.size()) throw NumericalError("model output size changed between calls");
  }
  rep.nn_inference_time_s = median(times);
  rep.V_nn = nn.V;
  rep.theta_nn_deg = nn.theta * kRadToDeg;

  const auto t0 = Clock::now();
  const NewtonResult nt = solve_newton(data, y, spec);
  rep.newton_time_s = seconds_since(t0);
  rep.newton_converged = nt.converged;
  rep.newton_iterations = nt.iterations;
  rep.V_newton = nt.state.V;
  rep.theta_newton_deg = nt.state.theta * kRadToDeg;
  if (!nt.converged) return rep;

  const auto s = static_cast<Index>(data.bus_sets.slack_idx);
  const Index n = nn.V.size();
  double sum_v = 0.0;
  double sum_t = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double dv = std::abs(nn.V[i] - nt.state.V[i]);
    const double a_nn = (nn.theta[i] - nn.theta[s]) * kRadToDeg;
    const double a_nt = (nt.state.theta[i] - nt.state.theta[s]) * kRadToDeg;
    const double dt = std::abs(wrap_degrees(a_nn - a_nt));
    rep.dV_max = std::max(rep.dV_max, dv);
    rep.dtheta_max_deg = std::max(rep.dtheta_max_deg, dt);
    sum_v += dv;
    sum_t += dt;
  }
  if (n > 0) {
    rep.dV_mean = sum_v / static_cast<double>(n);
    rep.dtheta_mean_deg = sum_t / static_cast<double>(n);
  }
  return rep;
}

std::string report_to_json(const EvalReport& r) {
  auto vec = [](const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  json j;
  j["case"] = r.case_name;
  j["version"] = NEUROPF_VERSION;
  j["bus_ids"] = r.bus_ids;
  j["residual_norm"] = r.residual_norm;
  j["newton_converged"] = r.newton_converged;
  j["newton_iterations"] = r.newton_iterations;
  j["newton_time_s"] = r.newton_time_s;
  j["nn_inference_time_s"] = r.nn_inference_time_s;
  j["dV_max"] = r.dV_max;
  j["dV_mean"] = r.dV_mean;
  j["dtheta_max_deg"] = r.dtheta_max_deg;
  j["dtheta_mean_deg"] = r.dtheta_mean_deg;
  j["V_nn"] = vec(r.V_nn);
  j["V_newton"] = vec(r.V_newton);
  j["theta_nn_deg"] = vec(r.theta_nn_deg);
  j["theta_newton_deg"] = vec(r.theta_newton_deg);
  return j.dump(2);
}

EvalReport report_from_json(const std::string& text) {
  auto vec = [](const json& j) {
    const auto v = j.get<std::vector<double>>();
    return VectorXd(Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size())));
  };
  EvalReport r;
  try {
    const json j = json::parse(text);
    r.case_name = j.at("case").get<std::string>();
    r.bus_ids = j.at("bus_ids").get<std::vector<int>>();
    r.residual_norm = j.at("residual_norm").get<double>();
    r.newton_converged = j.at("newton_converged").get<bool>();
    r.newton_iterations = j.at("newton_iterations").get<int>();
    r.newton_time_s = j.at("newton_time_s").get<double>();
    r.nn_inference_time_s = j.at("nn_inference_time_s").get<double>();
    r.dV_max = j.at("dV_max").get<double>();
    r.dV_mean = j.at("dV_mean").get<double>();
    r.dtheta_max_deg = j.at("dtheta_max_deg").get<double>();
    r.dtheta_mean_deg = j.at("dtheta_mean_deg").get<double>();
    r.V_nn = vec(j.at("V_nn"));
    r.V_newton = vec(j.at("V_newton"));
    r.theta_nn_deg = vec(j.at("theta_nn_deg"));
    r.theta_newton_deg = vec(j.at("theta_newton_deg"));
  } catch (const json::exception& e) {
    throw ParseError(std::string("eval report: ") + e.what());
  }
  return r;
}

BenchmarkResult batch_benchmark(const StateModel& model, const CaseData& data, const AdmittanceMatrix& y,
                                const MatrixXd& scenarios) {
  BenchmarkResult out;
  out.k = static_cast<std::size_t>(scenarios.cols());
  if (out.k == 0) return out;
  MatrixXd V;
  MatrixXd theta;
  auto t0 = Clock::now();
  model.predict_batch(scenarios, V, theta);
  out.nn_time_s = seconds_since(t0);

  const PowerInjection base = base_injections(data);
  t0 = Clock::now();
  for (Index k = 0; k < scenarios.cols(); ++k) {
    const NewtonResult r = solve_newton(data, y, apply_perturbation(base, PerturbationVector{scenarios.col(k)}, data));
    if (!r.converged) ++out.newton_failures;
  }
  out.newton_time_s = seconds_since(t0);
  out.speedup = out.nn_time_s > 0.0 ? out.newton_time_s / out.nn_time_s : 0.0;
  return out;
}

AblationTable ablation_sampling(const CaseData& data, const AdmittanceMatrix& y, const ArchitectureSpec& arch,
                                const TrainingConfig& config, const std::vector<std::uint64_t>& seeds,
                                const std::vector<Schedule>& strategies) {
  const PhysicsContext ctx(data, y);
  Rng heldout_rng(0x5eed0f4e1d0u);
  const MatrixXd heldout = uniform_batch(data.input_dim(), kHeldoutBatch, config.sampling.delta, heldout_rng);
  const MatrixXd zero = MatrixXd::Zero(static_cast<Index>(data.input_dim()), 1);

  AblationTable table;
  for (Schedule strat : strategies) {
    AblationSummary sum;
    sum.strategy = strat;
    std::vector<double> held;
    std::vector<double> fin;
    std::vector<double> rn;
    for (std::uint64_t seed : seeds) {
      TrainingConfig cfg = config;
      cfg.schedule = strat;
      cfg.seed = seed;
      const TrainResult tr = train(data, y, arch, cfg);
      AblationRow row;
      row.strategy = strat;
      row.seed = seed;
      row.final_train_loss = tr.final_loss;
      row.heldout_loss = loss(tr.params, heldout, ctx);
      row.residual_norm_u0 = residual_norms(evaluate_batch(tr.params, zero, ctx))[0];
      table.rows.push_back(row);
      held.push_back(row.heldout_loss);
      fin.push_back(row.final_train_loss);
      rn.push_back(row.residual_norm_u0);
    }
    sum.median_heldout_loss = median(held);
    sum.median_final_train_loss = median(fin);
    sum.median_residual_norm_u0 = median(rn);
    table.summary.push_back(sum);
  }
  return table;
}

void write_ablation_csv(std::ostream& os, const AblationTable& table) {
  os << "strategy,seed,final_train_loss,heldout_loss,residual_norm_u0\n";
  for (const auto& r : table.rows) {
    os << to_string(r.strategy) << ',' << r.seed << ',' << fmt17(r.final_train_loss) << ',' << fmt17(r.heldout_loss)
       << ',' << fmt17(r.residual_norm_u0) << "\n";
  }
  for (const auto& s : table.summary) {
    os << to_string(s.strategy) << ",median," << fmt17(s.median_final_train_loss) << ','
       << fmt17(s.median_heldout_loss) << ',' << fmt17(s.median_residual_norm_u0) << "\n";
  }
}

void write_comparison_csv(std::ostream& os, const EvalReport& r, const std::string& digest) {
  os << "# neuropf " << NEUROPF_VERSION << " config_digest=" << digest << "\n";
  os << kComparisonHeader << "\n";
  for (std::size_t i = 0; i < r.bus_ids.size(); ++i) {
    const auto k = static_cast<Index>(i);
    const bool has_nt = r.V_newton.size() > k;
    os << r.bus_ids[i] << ',' << fmt17(r.V_nn[k]) << ',' << fmt17(has_nt ? r.V_newton[k] : NAN) << ','
       << fmt17(r.theta_nn_deg[k]) << ',' << fmt17(has_nt ? r.theta_newton_deg[k] : NAN) << "\n";
  }
}

std::vector<std::filesystem::path> export_figure_data(const TrajectoryLog& log, const EvalReport& report,
                                                      const std::string& digest,
                                                      const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto traj = out_dir / "trajectory.csv";
  const auto comp = out_dir / "comparison.csv";
  const auto meta = out_dir / "meta.json";
  {
    std::ofstream os(traj);
    if (!os) throw ParseError("cannot write " + traj.string());
    os << "# neuropf " << NEUROPF_VERSION << " config_digest=" << digest << "\n";
    os << kFigureTrajectoryHeader << "\n";
    for (const auto& r : log.records) {
      os << r.epoch << ',' << to_string(r.stage) << ',' << fmt17(r.mean_dP) << ',' << fmt17(r.mean_dQ) << ','
         << fmt17(r.energy) << ',' << fmt17(r.loss) << ',' << fmt17(r.lr) << "\n";
    }
  }
  {
    std::ofstream os(comp);
    if (!os) throw ParseError("cannot write " + comp.string());
    write_comparison_csv(os, report, digest);
  }
  {
    std::ofstream os(meta);
    if (!os) throw ParseError("cannot write " + meta.string());
    json j;
    j["case"] = report.case_name;
    j["config_digest"] = digest;
    j["version"] = NEUROPF_VERSION;
    j["trajectory_rows"] = log.records.size();
    j["buses"] = report.bus_ids.size();
    j["newton_converged"] = report.newton_converged;
    j["residual_norm"] = report.residual_norm;
    j["dV_max"] = report.dV_max;
    j["dtheta_max_deg"] = report.dtheta_max_deg;
    os << j.dump(2) << "\n";
  }
  return {traj, comp, meta};
}

std::vector<FigureRow> read_figure_trajectory(std::istream& is) {
  std::vector<FigureRow> rows;
  read_csv(is, kFigureTrajectoryHeader, 7, "trajectory.csv", [&](const std::vector<std::string>& f) {
    FigureRow r;
    r.epoch = std::stoi(f[0]);
    r.stage = stage_from_string(f[1]);
    r.mean_dP = std::stod(f[2]);
    r.mean_dQ = std::stod(f[3]);
    r.energy = std::stod(f[4]);
    r.loss = std::stod(f[5]);
    r.lr = std::stod(f[6]);
    rows.push_back(r);
  });
  return rows;
}

std::vector<ComparisonRow> read_comparison(std::istream& is) {
  std::vector<ComparisonRow> rows;
  read_csv(is, kComparisonHeader, 5, "comparison.csv", [&](const std::vector<std::string>& f) {
    ComparisonRow r;
    r.bus = std::stoi(f[0]);
    r.V_nn = std::stod(f[1]);
    r.V_newton = std::stod(f[2]);
    r.theta_nn_deg = std::stod(f[3]);
    r.theta_newton_deg = std::stod(f[4]);
    rows.push_back(r);
  });
  return rows;
}

}  // namespace neuropf
