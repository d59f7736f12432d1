#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "neuropf/admittance.hpp"
#include "neuropf/case_io.hpp"
#include "neuropf/grad_engine.hpp"
#include "neuropf/network.hpp"
#include "neuropf/newton.hpp"
#include "neuropf/sampling.hpp"
#include "../oracles.hpp"

using namespace neuropf;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_batch(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double delta = 0.1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-delta, delta);
  MatrixXd U(rows, cols);
  for (auto& v : U.reshaped()) v = u(rng);
  return U;
}

// Network whose output ignores the input: all weights zero, output bias b.
NetworkParams constant_network(const CaseData& d, const VectorXd& b) {
  NetworkParams p(auto_config(d));
  p.values().setZero();
  p.bias(p.num_layers() - 1) = b;
  return p;
}

double inverse_softplus(double y) { return std::log(std::expm1(y)); }

}  // namespace

TEST_CASE("analytic gradient agrees with finite differences on IEEE14") {
  const CaseData d = load_case(oracle::data_path("case14.m"));
  const AdmittanceMatrix y = build_ybus(d);
  const PhysicsContext ctx(d, y);
  const auto arch = auto_config(d);
  double fine = 0.0, coarse = 0.0;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const NetworkParams p = init_network(arch, seed, pq_voltage_slots(d));
    Rng rng(seed + 10);
    const MatrixXd U = uniform_batch(22, 16, 0.1, rng);
    fine = std::max(fine, finite_difference_check(p, U, ctx, {}, 1e-5, 200, seed).max_rel_error);
    coarse = std::max(coarse, finite_difference_check(p, U, ctx, {}, 1e-1, 200, seed).max_rel_error);
  }
  CHECK(fine <= 1e-4);
  // the same check with a coarse step must fail, otherwise it proves nothing
  CHECK(coarse > 1e-2);
}

TEST_CASE("gradient with LayerNorm and reactive weighting") {
  const CaseData d = load_case(oracle::data_path("case14.m"));
  const AdmittanceMatrix y = build_ybus(d);
  const PhysicsContext ctx(d, y);
  ArchitectureOverrides ov;
  ov.use_layernorm = true;
  const NetworkParams p = init_network(auto_config(d, ov), 4, pq_voltage_slots(d));
  LossOptions o;
  o.dq_weight = 2.5;
  o.smoothing_sd = 1e-3;
  o.noise_seed = 77;
  const FdCheckResult r = finite_difference_check(p, random_batch(22, 6, 9), ctx, o, 1e-5, 40, 3);
  CHECK(r.max_rel_error <= 1e-4);
}

TEST_CASE("two-bus loss by hand") {
  const CaseData d = oracle::two_bus_case(50.0, 20.0);
  const AdmittanceMatrix y = build_ybus(d);
  const PhysicsContext ctx(d, y);
  const double zv = 0.3, zt = -0.2;
  const NetworkParams p = constant_network(d, (VectorXd(2) << zv, zt).finished());
  MatrixXd U(2, 2);
  U << 0.05, -0.02, 0.01, 0.03;
  const double V = std::log1p(std::exp(zv)) + 0.5;
  const double th = std::numbers::pi / 2 * std::tanh(zt);
  // Y12 = j10, Y22 = -j10 for a lossless x = 0.1 line
  const double P = 10.0 * V * std::sin(th);
  const double Q = 10.0 * V * V - 10.0 * V * std::cos(th);
  double expect = 0.0;
  for (int k = 0; k < 2; ++k) {
    const double dp = -0.5 + U(0, k) - P;
    const double dq = -0.2 + U(1, k) - Q;
    expect += dp * dp + dq * dq;
  }
  expect /= 2.0;
  CHECK(loss(p, U, ctx) == doctest::Approx(expect).epsilon(1e-12));
  LossOptions o;
  o.dq_weight = 3.0;
  double weighted = 0.0;
  for (int k = 0; k < 2; ++k) {
    const double dp = -0.5 + U(0, k) - P;
    const double dq = -0.2 + U(1, k) - Q;
    weighted += dp * dp + 3.0 * dq * dq;
  }
  CHECK(loss(p, U, ctx, o) == doctest::Approx(weighted / 2.0).epsilon(1e-12));
}

TEST_CASE("zero residual is a stationary point") {
  const CaseData d = oracle::two_bus_case(50.0, 20.0);
  const AdmittanceMatrix y = build_ybus(d);
  const PhysicsContext ctx(d, y);
  const NewtonResult nr = solve_newton(d, y, base_injections(d), {}, nullptr);
  REQUIRE(nr.converged);
  const double V = nr.state.V[1];
  const double th = nr.state.theta[1];
  const VectorXd b = (VectorXd(2) << inverse_softplus(V - 0.5), std::atanh(th / (std::numbers::pi / 2))).finished();
  const NetworkParams p = constant_network(d, b);
  const MatrixXd U = MatrixXd::Zero(2, 4);
  const GradientBundle g = loss_and_gradient(p, U, ctx);
  CHECK(g.loss < 1e-18);
  CHECK(g.grad.cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("batch invariances") {
  const CaseData d = load_case(oracle::data_path("case14.m"));
  const AdmittanceMatrix y = build_ybus(d);
  const PhysicsContext ctx(d, y);
  const NetworkParams p = init_network(auto_config(d), 11, pq_voltage_slots(d));
  const MatrixXd A = random_batch(22, 5, 21);
  const MatrixXd B = random_batch(22, 3, 22);
  SUBCASE("duplicating the batch changes nothing") {
    MatrixXd AA(22, 10);
    AA << A, A;
    const GradientBundle g1 = loss_and_gradient(p, A, ctx);
    const GradientBundle g2 = loss_and_gradient(p, AA, ctx);
    CHECK(g2.loss == doctest::Approx(g1.loss).epsilon(1e-12));
    CHECK((g2.grad - g1.grad).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + g1.grad.cwiseAbs().maxCoeff()));
  }
  SUBCASE("mean over a concatenation is the weighted mean") {
    MatrixXd AB(22, 8);
    AB << A, B;
    const GradientBundle ga = loss_and_gradient(p, A, ctx);
    const GradientBundle gb = loss_and_gradient(p, B, ctx);
    const GradientBundle gab = loss_and_gradient(p, AB, ctx);
    CHECK(gab.loss == doctest::Approx((5 * ga.loss + 3 * gb.loss) / 8).epsilon(1e-12));
    const VectorXd mix = (5 * ga.grad + 3 * gb.grad) / 8;
    CHECK((gab.grad - mix).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + mix.cwiseAbs().maxCoeff()));
  }
  SUBCASE("per-sample losses average to the loss") {
    const GradientBundle g = loss_and_gradient(p, A, ctx);
    CHECK(g.sample_loss.size() == 5);
    CHECK(g.sample_loss.mean() == doctest::Approx(g.loss).epsilon(1e-12));
    CHECK(loss(p, A, ctx) == doctest::Approx(g.loss).epsilon(1e-12));
  }
  SUBCASE("empty batch") { CHECK_THROWS_AS(loss(p, MatrixXd(22, 0), ctx), ValidationError); }
}

TEST_CASE("residual smoothing is seeded") {
  const CaseData d = load_case(oracle::data_path("case14.m"));
  const AdmittanceMatrix y = build_ybus(d);
  const PhysicsContext ctx(d, y);
  const NetworkParams p = init_network(auto_config(d), 0, pq_voltage_slots(d));
  const MatrixXd U = random_batch(22, 4, 1);
  LossOptions o;
  o.smoothing_sd = 1e-2;
  o.noise_seed = 5;
  const double a = loss(p, U, ctx, o);
  CHECK(loss(p, U, ctx, o) == a);
  o.noise_seed = 6;
  CHECK(loss(p, U, ctx, o) != a);
  CHECK(loss_and_gradient(p, U, ctx, o).loss == loss(p, U, ctx, o));
  o.smoothing_sd = 0.0;
  CHECK(loss(p, U, ctx, o) == loss(p, U, ctx));
}

TEST_CASE("residual norms and tensor views") {
  const CaseData d = load_case(oracle::data_path("case14.m"));
  const AdmittanceMatrix y = build_ybus(d);
  const PhysicsContext ctx(d, y);
  const NetworkParams p = init_network(auto_config(d), 0, pq_voltage_slots(d));
  const MatrixXd U = random_batch(22, 3, 2);
  const BatchResidual r = evaluate_batch(p, U, ctx);
  CHECK(r.dP.rows() == 13);
  CHECK(r.dQ.rows() == 9);
  const VectorXd rn = residual_norms(r);
  for (int k = 0; k < 3; ++k) {
    const double e = std::sqrt(r.dP.col(k).squaredNorm() / 13 + r.dQ.col(k).squaredNorm() / 9);
    CHECK(rn[k] == doctest::Approx(e).epsilon(1e-14));
  }
  const GradientBundle g = loss_and_gradient(p, U, ctx);
  const auto& slot = p.layout().slots[p.layout().weight_slot[0]];
  const auto W = g.tensor(p.layout(), p.layout().weight_slot[0]);
  CHECK(W.rows() == slot.rows);
  CHECK(W(0, 0) == g.grad[slot.offset]);
}
