#include "neuropf/power_flow.hpp"

#include <algorithm>
#include <cmath>

#include "neuropf/errors.hpp"

namespace neuropf {

namespace {

using Eigen::Index;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXcd complex_voltage(const MatrixXd& V, const MatrixXd& theta) {
  MatrixXcd E(V.rows(), V.cols());
  for (Index c = 0; c < V.cols(); ++c) {
    for (Index r = 0; r < V.rows(); ++r) E(r, c) = std::polar(V(r, c), theta(r, c));
  }
  return E;
}

}  // namespace

Eigen::VectorXd ResidualVector::stacked() const {
  VectorXd out(size());
  out << dP, dQ;
  return out;
}

void power_complex_batch(const MatrixXd& V, const MatrixXd& theta, const AdmittanceMatrix& y, MatrixXd& P,
                         MatrixXd& Q) {
  const MatrixXcd E = complex_voltage(V, theta);
  const MatrixXcd I = y.Y * E;
  const MatrixXcd S = E.cwiseProduct(I.conjugate());
  P = S.real();
  Q = S.imag();
}

PowerInjection power_complex(const StateVector& state, const AdmittanceMatrix& y) {
  MatrixXd P;
  MatrixXd Q;
  power_complex_batch(state.V, state.theta, y, P, Q);
  return {P.col(0), Q.col(0)};
}

PowerInjection power_trig(const StateVector& state, const AdmittanceMatrix& y) {
  const Index n = y.n;
  PowerInjection out{VectorXd::Zero(n), VectorXd::Zero(n)};
  for (Index j = 0; j < y.Y.outerSize(); ++j) {
    for (SparseComplex::InnerIterator it(y.Y, j); it; ++it) {
      const Index i = it.row();
      const double gij = it.value().real();
      const double bij = it.value().imag();
      const double tij = state.theta[i] - state.theta[j];
      const double vv = state.V[i] * state.V[j];
      const double c = std::cos(tij);
      const double s = std::sin(tij);
      out.P[i] += vv * (gij * c + bij * s);
      out.Q[i] += vv * (gij * s - bij * c);
    }
  }
  return out;
}

ResidualVector mismatch_from(const PowerInjection& calc, const PowerInjection& spec, const CaseData& data) {
  const auto& sets = data.bus_sets;
  ResidualVector res;
  res.p_buses = sets.non_slack;
  res.q_buses = sets.pq_idxs;
  res.dP.resize(static_cast<Index>(sets.non_slack.size()));
  res.dQ.resize(static_cast<Index>(sets.pq_idxs.size()));
  for (std::size_t k = 0; k < sets.non_slack.size(); ++k) {
    const auto i = static_cast<Index>(sets.non_slack[k]);
    res.dP[static_cast<Index>(k)] = spec.P[i] - calc.P[i];
  }
  for (std::size_t k = 0; k < sets.pq_idxs.size(); ++k) {
    const auto i = static_cast<Index>(sets.pq_idxs[k]);
    res.dQ[static_cast<Index>(k)] = spec.Q[i] - calc.Q[i];
  }
  return res;
}

ResidualVector mismatch(const StateVector& state, const PowerInjection& spec, const CaseData& data,
                        const AdmittanceMatrix& y) {
  return mismatch_from(power_complex(state, y), spec, data);
}

double energy(const ResidualVector& res) { return 0.5 * (res.dP.squaredNorm() + res.dQ.squaredNorm()); }

double energy(const StateVector& state, const PowerInjection& spec, const CaseData& data, const AdmittanceMatrix& y) {
  return energy(mismatch(state, spec, data, y));
}

double residual_norm(const ResidualVector& res) {
  double acc = 0.0;
  if (res.dP.size() > 0) acc += res.dP.squaredNorm() / static_cast<double>(res.dP.size());
  if (res.dQ.size() > 0) acc += res.dQ.squaredNorm() / static_cast<double>(res.dQ.size());
  return std::sqrt(acc);
}

PowerInjection apply_perturbation(const PowerInjection& spec, const PerturbationVector& u, const CaseData& data) {
  if (u.values.size() != static_cast<Index>(data.input_dim())) {
    throw ValidationError("perturbation length " + std::to_string(u.values.size()) + " != input dim " +
                          std::to_string(data.input_dim()));
  }
  MatrixXd P;
  MatrixXd Q;
  apply_perturbation_batch(spec, u.values, data, P, Q);
  return {P.col(0), Q.col(0)};
}

void apply_perturbation_batch(const PowerInjection& spec, const MatrixXd& U, const CaseData& data, MatrixXd& P_spec,
                              MatrixXd& Q_spec) {
  const auto& sets = data.bus_sets;
  P_spec = spec.P.replicate(1, U.cols());
  Q_spec = spec.Q.replicate(1, U.cols());
  Index row = 0;
  for (std::size_t j : sets.pq_idxs) {
    const auto i = static_cast<Index>(j);
    P_spec.row(i) += U.row(row++);
    Q_spec.row(i) += U.row(row++);
  }
  for (std::size_t j : sets.pv_idxs) {
    P_spec.row(static_cast<Index>(j)) += U.row(row++);
  }
}

void power_vjp(const MatrixXd& V, const MatrixXd& theta, const AdmittanceMatrix& y, const MatrixXd& a,
               const MatrixXd& b, MatrixXd& dV, MatrixXd& dtheta) {
  // f = Re sum conj(lambda) .* S with lambda = a + jb. Writing df = Re(sum g .* dE):
  //   g = conj(lambda .* I) + Y^T (lambda .* conj(E)),
  //   dE = e^{j theta} dV + j E dtheta.
  const MatrixXcd E = complex_voltage(V, theta);
  const MatrixXcd I = y.Y * E;
  MatrixXcd lambda(a.rows(), a.cols());
  lambda.real() = a;
  lambda.imag() = b;
  const MatrixXcd g = lambda.cwiseProduct(I).conjugate() + y.Yt * lambda.cwiseProduct(E.conjugate());
  dV.resize(V.rows(), V.cols());
  dtheta.resize(V.rows(), V.cols());
  for (Index c = 0; c < V.cols(); ++c) {
    for (Index r = 0; r < V.rows(); ++r) {
      const Complex gk = g(r, c);
      dV(r, c) = (std::polar(1.0, theta(r, c)) * gk).real();
      dtheta(r, c) = -(E(r, c) * gk).imag();
    }
  }
}

Eigen::VectorXd free_variables(const StateVector& state, const CaseData& data) {
  const auto& sets = data.bus_sets;
  VectorXd x(static_cast<Index>(sets.non_slack.size() + sets.pq_idxs.size()));
  Index k = 0;
  for (std::size_t i : sets.non_slack) x[k++] = state.theta[static_cast<Index>(i)];
  for (std::size_t i : sets.pq_idxs) x[k++] = state.V[static_cast<Index>(i)];
  return x;
}

void set_free_variables(StateVector& state, const Eigen::VectorXd& x, const CaseData& data) {
  const auto& sets = data.bus_sets;
  Index k = 0;
  for (std::size_t i : sets.non_slack) state.theta[static_cast<Index>(i)] = x[k++];
  for (std::size_t i : sets.pq_idxs) state.V[static_cast<Index>(i)] = x[k++];
}

Eigen::VectorXd energy_gradient(const StateVector& state, const PowerInjection& spec, const CaseData& data,
                                const AdmittanceMatrix& y) {
  const ResidualVector res = mismatch(state, spec, data, y);
  const Index n = y.n;
  // dE/dP_calc = -dP at non-slack buses, dE/dQ_calc = -dQ at PQ buses.
  MatrixXd a = MatrixXd::Zero(n, 1);
  MatrixXd b = MatrixXd::Zero(n, 1);
  for (std::size_t k = 0; k < res.p_buses.size(); ++k) a(static_cast<Index>(res.p_buses[k]), 0) = -res.dP[static_cast<Index>(k)];
  for (std::size_t k = 0; k < res.q_buses.size(); ++k) b(static_cast<Index>(res.q_buses[k]), 0) = -res.dQ[static_cast<Index>(k)];
  MatrixXd dV;
  MatrixXd dtheta;
  power_vjp(state.V, state.theta, y, a, b, dV, dtheta);
  StateVector grad{dV.col(0), dtheta.col(0)};
  return free_variables(grad, data);
}

GradientFlowResult gradient_flow_solve(const CaseData& data, const AdmittanceMatrix& y, const PowerInjection& spec,
                                       const StateVector& init, const GradientFlowOptions& opts) {
  if (!(opts.step > 0.0)) throw ValidationError("gradient flow step must be positive");
  GradientFlowResult out;
  out.state = init;
  ResidualVector res = mismatch(out.state, spec, data, y);
  double e = energy(res);
  out.initial_energy = e;
  out.final_energy = e;
  if (residual_norm(res) < opts.tol) {
    out.converged = true;
    return out;
  }

  VectorXd x = free_variables(out.state, data);
  StateVector trial = out.state;
  double h = opts.step;
  while (out.steps < opts.max_steps) {
    const VectorXd grad = energy_gradient(out.state, spec, data, y);
    double e_trial = 0.0;
    ResidualVector res_trial;
    int halvings = 0;
    for (;;) {
      set_free_variables(trial, x - h * grad, data);
      res_trial = mismatch(trial, spec, data, y);
      e_trial = energy(res_trial);
      if (e_trial <= e || halvings == 30) break;
      h *= 0.5;
      ++halvings;
    }
    if (e_trial > e) break;  // no descent step available
    x = free_variables(trial, data);
    out.state = trial;
    e = e_trial;
    ++out.steps;
    if (residual_norm(res_trial) < opts.tol) {
      out.converged = true;
      break;
    }
    h = std::min(2.0 * h, opts.step);
  }
  out.final_energy = e;
  return out;
}

}  // namespace neuropf
