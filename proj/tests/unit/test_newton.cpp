#include <doctest.h>

#include <numbers>
#include <random>

#include "neuropf/admittance.hpp"
#include "neuropf/case_io.hpp"
#include "neuropf/newton.hpp"
#include "../oracles.hpp"

using namespace neuropf;
using Eigen::VectorXd;

namespace {

// PYPOWER runpf on case14 (PF_TOL 1e-10, no reactive limits): bus, Vm, Va in degrees.
struct RefBus {
  int bus;
  double vm;
  double va;
};
constexpr RefBus kCase14Ref[] = {
    {1, 1.06, 0.0},
    {2, 1.045, -4.9825891420},
    {3, 1.01, -12.7250999383},
    {4, 1.0176708537, -10.3129010923},
    {5, 1.0195138598, -8.7738538983},
    {6, 1.07, -14.2209464637},
    {7, 1.0615195325, -13.3596273653},
    {8, 1.09, -13.3596273653},
    {9, 1.0559317206, -14.9385212952},
    {10, 1.0509846250, -15.0972884631},
    {11, 1.0569065185, -14.7906220313},
    {12, 1.0551885632, -15.0755845204},
    {13, 1.0503817136, -15.1562763362},
    {14, 1.0355299459, -16.0336445292},
};

}  // namespace

TEST_CASE("flat start") {
  const CaseData d = load_case(oracle::data_path("case14.m"));
  const StateVector s = flat_start(d);
  for (auto i : d.bus_sets.pq_idxs) CHECK(s.V[static_cast<Eigen::Index>(i)] == 1.0);
  CHECK(s.theta.isZero());
  CHECK(s.V[1] == 1.045);  // bus 2 generator setpoint
  CHECK(s.V[0] == 1.06);

  CaseData shifted = d;
  shifted.buses[0].Va = 10.0;
  finalize_case(shifted);
  const StateVector t = flat_start(shifted);
  CHECK(t.theta.isConstant(10.0 * std::numbers::pi / 180.0));
}

TEST_CASE("Jacobian matches finite differences") {
  const CaseData d = load_case(oracle::data_path("case14.m"));
  const AdmittanceMatrix y = build_ybus(d);
  const Eigen::MatrixXcd Yd = oracle::dense_ybus(d);
  std::mt19937_64 rng(23);
  for (int k = 0; k < 5; ++k) {
    const StateVector s = oracle::random_state(d, rng, 0.9, 1.1, -0.5, 0.5);
    const Eigen::MatrixXd Ja(jacobian(s, y, d));
    const Eigen::MatrixXd Jf = oracle::fd_jacobian(d, Yd, s.V, s.theta, 1e-6);
    REQUIRE(Ja.rows() == 22);
    REQUIRE(Ja.cols() == 22);
    const double scale = Jf.cwiseAbs().maxCoeff();
    CHECK(((Ja - Jf).cwiseAbs().array() / scale).maxCoeff() < 1e-7);
  }
}

TEST_CASE("Jacobian closed forms") {
  SUBCASE("lossless two-bus angle derivative") {
    const CaseData d = oracle::two_bus_case();
    const AdmittanceMatrix y = build_ybus(d);
    StateVector s{VectorXd(2), VectorXd(2)};
    s.V << 1.0, 0.97;
    s.theta << 0.0, -0.2;
    const Eigen::MatrixXd J(jacobian(s, y, d));
    // P_2 = V_2 V_1 B_21 sin(theta_2 - theta_1) with B_21 = 10
    CHECK(J(0, 0) == doctest::Approx(s.V[0] * s.V[1] * 10.0 * std::cos(s.theta[1] - s.theta[0])));
  }
  SUBCASE("lossless network at flat start has a zero dP/dV block") {
    CaseData d = load_case(oracle::data_path("case14.m"));
    for (auto& br : d.branches) br.r = 0.0;
    for (auto& b : d.buses) b.Gs = 0.0;
    finalize_case(d);
    const AdmittanceMatrix y = build_ybus(d);
    StateVector s = flat_start(d);
    s.V.setOnes();
    const Eigen::MatrixXd J(jacobian(s, y, d));
    const auto np = static_cast<Eigen::Index>(d.bus_sets.non_slack.size());
    const auto nq = static_cast<Eigen::Index>(d.bus_sets.pq_idxs.size());
    CHECK(J.block(0, np, np, nq).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("IEEE14 matches the PYPOWER reference") {
  const CaseData d = load_case(oracle::data_path("case14.m"));
  const AdmittanceMatrix y = build_ybus(d);
  NewtonOptions o;
  o.tol = 1e-10;
  const NewtonResult r = solve_newton(d, y, base_injections(d), o);
  REQUIRE(r.converged);
  CHECK(r.iterations <= 10);
  for (const auto& ref : kCase14Ref) {
    const auto i = static_cast<Eigen::Index>(d.index_of(ref.bus));
    CHECK(r.state.V[i] == doctest::Approx(ref.vm).epsilon(1e-9));
    CHECK(r.state.theta[i] * 180.0 / std::numbers::pi == doctest::Approx(ref.va).epsilon(1e-8));
  }
}

TEST_CASE("Newton on every fixture") {
  for (const char* f : {"case14.m", "case39.m", "case118.m", "case300.m"}) {
    CAPTURE(f);
    const CaseData d = load_case(oracle::data_path(f));
    const AdmittanceMatrix y = build_ybus(d);
    const NewtonResult r = solve_newton(d, y, base_injections(d));
    REQUIRE(r.converged);
    CHECK(r.final_mismatch_inf <= 1e-6);
    CHECK(r.iterations <= 15);
    CHECK(r.history.size() == static_cast<std::size_t>(r.iterations) + 1);
    // quadratic tail: the last step gains at least an order of magnitude
    if (r.history.size() >= 2) CHECK(r.history.back() * 10.0 <= r.history[r.history.size() - 2]);
    // slack and PV quantities untouched
    const auto s = static_cast<Eigen::Index>(d.bus_sets.slack_idx);
    CHECK(r.state.theta[s] == d.slack_angle());
    for (auto i : d.bus_sets.pv_idxs) CHECK(r.state.V[static_cast<Eigen::Index>(i)] == d.voltage_setpoint(i));
  }
}

TEST_CASE("already solved input returns immediately") {
  const CaseData d = load_case(oracle::data_path("case39.m"));
  const AdmittanceMatrix y = build_ybus(d);
  const PowerInjection spec = base_injections(d);
  const NewtonResult first = solve_newton(d, y, spec);
  REQUIRE(first.converged);
  const NewtonResult again = solve_newton(d, y, spec, {}, &first.state);
  CHECK(again.converged);
  CHECK(again.iterations <= 1);
}

TEST_CASE("warm and flat starts agree") {
  const CaseData d = load_case(oracle::data_path("case118.m"));
  const AdmittanceMatrix y = build_ybus(d);
  const PowerInjection spec = base_injections(d);
  NewtonOptions o;
  o.tol = 1e-11;
  const NewtonResult flat = solve_newton(d, y, spec, o);
  REQUIRE(flat.converged);
  StateVector warm = flat.state;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 0.01);
  for (auto i : d.bus_sets.pq_idxs) warm.V[static_cast<Eigen::Index>(i)] += n(rng);
  for (auto i : d.bus_sets.non_slack) warm.theta[static_cast<Eigen::Index>(i)] += n(rng);
  const NewtonResult w = solve_newton(d, y, spec, o, &warm);
  REQUIRE(w.converged);
  CHECK((w.state.V - flat.state.V).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((w.state.theta - flat.state.theta).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("failures are reported, not thrown") {
  SUBCASE("iteration cap") {
    const CaseData d = load_case(oracle::data_path("case300.m"));
    NewtonOptions o;
    o.max_iter = 1;
    const NewtonResult r = solve_newton(d, build_ybus(d), base_injections(d), o);
    CHECK_FALSE(r.converged);
    CHECK(r.history.size() >= 2);
    CHECK_FALSE(r.diagnosis.empty());
  }
  SUBCASE("singular Jacobian from an islanded load bus") {
    CaseData d = oracle::two_bus_case(10.0, 5.0);
    Bus b3;
    b3.id = 3;
    b3.bus_type = BusType::PQ;
    b3.Vm = 1.0;
    b3.Pd = 10.0;
    d.buses.push_back(b3);
    finalize_case(d);
    const NewtonResult r = solve_newton(d, build_ybus(d), base_injections(d));
    CHECK_FALSE(r.converged);
    INFO(r.diagnosis);
    CHECK(r.diagnosis.find("singular") != std::string::npos);
  }
}
