#include "neuropf/newton.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>
#include <Eigen/SparseLU>

#include "neuropf/errors.hpp"

namespace neuropf {

namespace {

using Eigen::Index;
using Eigen::VectorXcd;
using Eigen::VectorXd;

// Below this bus count the Jacobian is factored densely.
constexpr Index kDenseBelow = 50;

double inf_norm(const ResidualVector& res) {
  double m = 0.0;
  if (res.dP.size() > 0) m = std::max(m, res.dP.cwiseAbs().maxCoeff());
  if (res.dQ.size() > 0) m = std::max(m, res.dQ.cwiseAbs().maxCoeff());
  return m;
}

}  // namespace

StateVector flat_start(const CaseData& data) {
  const auto n = static_cast<Index>(data.bus_count());
  StateVector s{VectorXd::Ones(n), VectorXd::Constant(n, data.slack_angle())};
  for (Index i = 0; i < n; ++i) {
    if (!data.is_pq(static_cast<std::size_t>(i))) s.V[i] = data.voltage_setpoint(static_cast<std::size_t>(i));
  }
  return s;
}

StateVector case_start(const CaseData& data) {
  StateVector s = flat_start(data);
  for (std::size_t i = 0; i < data.bus_count(); ++i) {
    const auto k = static_cast<Index>(i);
    if (data.is_pq(i)) s.V[k] = data.buses[i].Vm;
    s.theta[k] = data.buses[i].Va * std::numbers::pi / 180.0;
  }
  return s;
}

SparseReal jacobian(const StateVector& state, const AdmittanceMatrix& y, const CaseData& data) {
  const Index n = y.n;
  VectorXcd E(n);
  VectorXcd Enorm(n);
  for (Index i = 0; i < n; ++i) {
    E[i] = std::polar(state.V[i], state.theta[i]);
    Enorm[i] = std::polar(1.0, state.theta[i]);
  }
  const VectorXcd I = y.Y * E;

  // dS/dtheta = j diag(E) conj(diag(I) - Y diag(E))
  // dS/dV     = diag(E) conj(Y diag(E/|E|)) + conj(diag(I)) diag(E/|E|)
  // Both share Y's pattern plus the diagonal (already present in Y).
  SparseComplex dS_dth = y.Y;
  SparseComplex dS_dv = y.Y;
  for (Index j = 0; j < n; ++j) {
    SparseComplex::InnerIterator a(dS_dth, j);
    SparseComplex::InnerIterator b(dS_dv, j);
    for (; a; ++a, ++b) {
      const Index i = a.row();
      const Complex yij = a.value();
      Complex th = -yij * E[j];
      Complex v = E[i] * std::conj(yij * Enorm[j]);
      if (i == j) {
        th += I[i];
        v += std::conj(I[i]) * Enorm[i];
      }
      a.valueRef() = Complex(0.0, 1.0) * E[i] * std::conj(th);
      b.valueRef() = v;
    }
  }

  const auto& sets = data.bus_sets;
  std::vector<Index> prow(static_cast<std::size_t>(n), -1);
  std::vector<Index> qrow(static_cast<std::size_t>(n), -1);
  const auto np = static_cast<Index>(sets.non_slack.size());
  for (std::size_t k = 0; k < sets.non_slack.size(); ++k) prow[sets.non_slack[k]] = static_cast<Index>(k);
  for (std::size_t k = 0; k < sets.pq_idxs.size(); ++k) qrow[sets.pq_idxs[k]] = static_cast<Index>(k);
  // Column maps are identical to the row maps: theta columns use prow, V columns use qrow.
  const Index m = np + static_cast<Index>(sets.pq_idxs.size());

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(4 * dS_dth.nonZeros()));
  for (Index j = 0; j < n; ++j) {
    SparseComplex::InnerIterator a(dS_dth, j);
    SparseComplex::InnerIterator b(dS_dv, j);
    for (; a; ++a, ++b) {
      const auto i = static_cast<std::size_t>(a.row());
      const auto jj = static_cast<std::size_t>(j);
      if (prow[i] >= 0 && prow[jj] >= 0) trip.emplace_back(prow[i], prow[jj], a.value().real());
      if (prow[i] >= 0 && qrow[jj] >= 0) trip.emplace_back(prow[i], np + qrow[jj], b.value().real());
      if (qrow[i] >= 0 && prow[jj] >= 0) trip.emplace_back(np + qrow[i], prow[jj], a.value().imag());
      if (qrow[i] >= 0 && qrow[jj] >= 0) trip.emplace_back(np + qrow[i], np + qrow[jj], b.value().imag());
    }
  }
  SparseReal J(m, m);
  J.setFromTriplets(trip.begin(), trip.end());
  J.makeCompressed();
  return J;
}

NewtonResult solve_newton(const CaseData& data, const AdmittanceMatrix& y, const PowerInjection& spec,
                          const NewtonOptions& opts, const StateVector* init) {
  if (!(opts.tol > 0.0) || opts.max_iter < 1) throw ValidationError("invalid Newton options");
  NewtonResult out;
  if (init != nullptr) {
    out.state = *init;
  } else if (opts.flat_start) {
    out.state = flat_start(data);
  } else {
    out.state = case_start(data);
  }

  ResidualVector res = mismatch(out.state, spec, data, y);
  double norm = inf_norm(res);
  out.history.push_back(norm);
  VectorXd x = free_variables(out.state, data);

  const bool dense = y.n < kDenseBelow;
  Eigen::SparseLU<SparseReal, Eigen::COLAMDOrdering<int>> sparse_lu;
  bool pattern_analyzed = false;

  while (norm > opts.tol && out.iterations < opts.max_iter) {
    if (!std::isfinite(norm)) {
      out.diagnosis = "mismatch became non-finite";
      break;
    }
    const SparseReal J = jacobian(out.state, y, data);
    const VectorXd F = res.stacked();
    VectorXd dx;
    if (x.size() == 0) break;
    if (dense) {
      const Eigen::MatrixXd Jd(J);
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(Jd);
      const double min_pivot = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
      if (!(min_pivot > 0.0) || !(lu.rcond() > 1e-14)) {
        out.diagnosis = "singular Jacobian (rcond " + std::to_string(lu.rcond()) + ") at iteration " +
                        std::to_string(out.iterations);
        break;
      }
      dx = lu.solve(F);
    } else {
      if (!pattern_analyzed) {
        sparse_lu.analyzePattern(J);
        pattern_analyzed = true;
      }
      sparse_lu.factorize(J);
      if (sparse_lu.info() != Eigen::Success) {
        out.diagnosis = "singular Jacobian at iteration " + std::to_string(out.iterations) + ": " +
                        sparse_lu.lastErrorMessage();
        break;
      }
      dx = sparse_lu.solve(F);
    }
    if (!dx.allFinite()) {
      out.diagnosis = "non-finite Newton step at iteration " + std::to_string(out.iterations);
      break;
    }

    // Damping: retry with half steps while the mismatch blows up by more than 10x.
    double alpha = 1.0;
    StateVector trial = out.state;
    ResidualVector trial_res;
    double trial_norm = 0.0;
    for (int halvings = 0;; ++halvings) {
      set_free_variables(trial, x + alpha * dx, data);
      trial_res = mismatch(trial, spec, data, y);
      trial_norm = inf_norm(trial_res);
      if ((std::isfinite(trial_norm) && trial_norm <= 10.0 * norm) || halvings == 4) break;
      alpha *= 0.5;
    }
    x += alpha * dx;
    out.state = std::move(trial);
    res = std::move(trial_res);
    norm = trial_norm;
    ++out.iterations;
    out.history.push_back(norm);
  }

  out.final_mismatch_inf = norm;
  out.converged = norm <= opts.tol;
  if (!out.converged && out.diagnosis.empty()) {
    out.diagnosis = "no convergence after " + std::to_string(out.iterations) + " iterations";
  }
  return out;
}

}  // namespace neuropf
