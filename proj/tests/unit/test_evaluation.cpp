#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "neuropf/admittance.hpp"
#include "neuropf/case_io.hpp"
#include "neuropf/evaluation.hpp"
#include "../oracles.hpp"

using namespace neuropf;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Newton solution rotated by a constant angle; must compare equal after slack alignment.
class RotatedOracle : public StateModel {
 public:
  RotatedOracle(const CaseData& d, const AdmittanceMatrix& y, double shift) : inner_(d, y), shift_(shift) {}
  StateVector predict(const PerturbationVector& u) const override {
    StateVector s = inner_.predict(u);
    s.theta.array() += shift_;
    return s;
  }

 private:
  NewtonOracleModel inner_;
  double shift_;
};

}  // namespace

TEST_CASE("angle wrapping") {
  CHECK(wrap_degrees(180.0) == 180.0);
  CHECK(wrap_degrees(-180.0) == 180.0);
  CHECK(wrap_degrees(190.0) == doctest::Approx(-170.0));
  CHECK(wrap_degrees(-370.0) == doctest::Approx(-10.0));
  CHECK(wrap_degrees(0.0) == 0.0);
}

TEST_CASE("evaluation against Newton") {
  const CaseData d = load_case(oracle::data_path("case14.m"));
  const AdmittanceMatrix y = build_ybus(d);
  const VectorXd u0 = VectorXd::Zero(22);
  SUBCASE("oracle model has zero difference") {
    const NewtonOracleModel m(d, y);
    const EvalReport r = evaluate(m, d, y, {u0}, 3);
    CHECK(r.newton_converged);
    CHECK(r.residual_norm < 1e-6);
    CHECK(r.dV_max < 1e-12);
    CHECK(r.dtheta_max_deg < 1e-10);
    CHECK(r.bus_ids.size() == 14);
  }
  SUBCASE("constant angle offset is invisible") {
    const RotatedOracle m(d, y, 0.3);
    const EvalReport r = evaluate(m, d, y, {u0}, 1);
    CHECK(r.dtheta_max_deg < 1e-9);
  }
  SUBCASE("untrained network") {
    const NetworkParams p = init_network(auto_config(d), 0, pq_voltage_slots(d));
    const NeuralModel m(p, d);
    const EvalReport r = evaluate(m, d, y, {u0}, 5);
    CHECK(r.residual_norm > 0.1);
    CHECK(r.dV_max > 0.5);
    CHECK(r.nn_inference_time_s > 0.0);
    MatrixXd U = MatrixXd::Random(22, 4) * 0.1;
    MatrixXd V, th;
    m.predict_batch(U, V, th);
    for (int k = 0; k < 4; ++k) {
      const StateVector s = m.predict({U.col(k)});
      CHECK((s.V - V.col(k)).cwiseAbs().maxCoeff() <= 1e-14);
      CHECK((s.theta - th.col(k)).cwiseAbs().maxCoeff() <= 1e-14);
    }
  }
  SUBCASE("report JSON round trip") {
    const NewtonOracleModel m(d, y);
    const EvalReport r = evaluate(m, d, y, {u0}, 1);
    const EvalReport b = report_from_json(report_to_json(r));
    CHECK(b.case_name == r.case_name);
    CHECK(b.bus_ids == r.bus_ids);
    CHECK(b.V_nn == r.V_nn);
    CHECK(b.theta_newton_deg == r.theta_newton_deg);
    CHECK(b.dV_max == r.dV_max);
    CHECK(b.newton_iterations == r.newton_iterations);
  }
}

TEST_CASE("batch benchmark") {
  const CaseData d = load_case(oracle::data_path("case14.m"));
  const AdmittanceMatrix y = build_ybus(d);
  const NetworkParams p = init_network(auto_config(d), 0, pq_voltage_slots(d));
  const NeuralModel m(p, d);
  const BenchmarkResult e = batch_benchmark(m, d, y, MatrixXd(22, 0));
  CHECK(e.k == 0);
  CHECK(e.speedup == 0.0);
  const BenchmarkResult r = batch_benchmark(m, d, y, MatrixXd::Random(22, 10) * 0.1);
  CHECK(r.k == 10);
  CHECK(r.newton_failures == 0);
  CHECK(r.nn_time_s > 0.0);
  CHECK(r.speedup == doctest::Approx(r.newton_time_s / r.nn_time_s));
}

TEST_CASE("figure data export") {
  const CaseData d = load_case(oracle::data_path("case14.m"));
  const AdmittanceMatrix y = build_ybus(d);
  const NewtonOracleModel m(d, y);
  const EvalReport rep = evaluate(m, d, y, {VectorXd::Zero(22)}, 1);
  TrajectoryLog log;
  log.records.push_back({0, Stage::SobolExplore, 2.0, 5e-4, 0.1, 0.2, 0.3, 0});
  log.records.push_back({5, Stage::LhsRefine, 1.0, 4e-4, 0.05, 0.1, 0.15, 0});
  const auto dir = std::filesystem::temp_directory_path() / "neuropf_fig_test";
  std::filesystem::remove_all(dir);
  const auto paths = export_figure_data(log, rep, "feedfacecafebeef", dir);
  CHECK(paths.size() == 3);
  {
    std::ifstream is(dir / "trajectory.csv");
    const auto rows = read_figure_trajectory(is);
    REQUIRE(rows.size() == 2);
    CHECK(rows[1] == FigureRow{5, Stage::LhsRefine, 0.05, 0.1, 0.15, 1.0, 4e-4});
  }
  {
    std::ifstream is(dir / "comparison.csv");
    const auto rows = read_comparison(is);
    REQUIRE(rows.size() == 14);
    CHECK(rows[0].bus == rep.bus_ids[0]);
    CHECK(rows[3].V_newton == rep.V_newton[3]);
  }
  CHECK(std::filesystem::exists(dir / "meta.json"));
  const auto empty_dir = dir / "empty";
  export_figure_data(TrajectoryLog{}, rep, "x", empty_dir);
  std::ifstream is(empty_dir / "trajectory.csv");
  std::stringstream ss;
  ss << is.rdbuf();
  CHECK(ss.str().find(kFigureTrajectoryHeader) != std::string::npos);
  std::ifstream again(empty_dir / "trajectory.csv");
  CHECK(read_figure_trajectory(again).empty());
  std::filesystem::remove_all(dir);
}
