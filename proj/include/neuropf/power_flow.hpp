#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "neuropf/admittance.hpp"
#include "neuropf/case_io.hpp"
#include "neuropf/types.hpp"

namespace neuropf {

/// Mismatch F(x) = spec - calc. `dP` covers every non-slack bus and `dQ` every
/// PQ bus, in the order given by `p_buses` / `q_buses`.
struct ResidualVector {
  Eigen::VectorXd dP;
  Eigen::VectorXd dQ;
  std::vector<std::size_t> p_buses;
  std::vector<std::size_t> q_buses;

  Eigen::Index size() const { return dP.size() + dQ.size(); }
  /// [dP; dQ] as one vector.
  Eigen::VectorXd stacked() const;
};

/// Load offsets, layout [dP_j, dQ_j for each PQ bus j; dP_i for each PV bus i].
struct PerturbationVector {
  Eigen::VectorXd values;
};

/// S = E .* conj(Y E) with E = V e^{j theta}.
PowerInjection power_complex(const StateVector& state, const AdmittanceMatrix& y);

/// Batched complex evaluation; V and theta are n x B, one column per sample.
void power_complex_batch(const Eigen::MatrixXd& V, const Eigen::MatrixXd& theta, const AdmittanceMatrix& y,
                         Eigen::MatrixXd& P, Eigen::MatrixXd& Q);

/// Polar/trigonometric evaluation of the injections. Kept independent of the
/// complex path so each can check the other.
PowerInjection power_trig(const StateVector& state, const AdmittanceMatrix& y);

ResidualVector mismatch(const StateVector& state, const PowerInjection& spec, const CaseData& data,
                        const AdmittanceMatrix& y);

/// Builds a residual vector from already computed injections.
ResidualVector mismatch_from(const PowerInjection& calc, const PowerInjection& spec, const CaseData& data);

/// 0.5 * ||F||^2.
double energy(const ResidualVector& res);
double energy(const StateVector& state, const PowerInjection& spec, const CaseData& data, const AdmittanceMatrix& y);

/// sqrt(mean(dP^2) + mean(dQ^2)); an empty group contributes zero.
double residual_norm(const ResidualVector& res);

PowerInjection apply_perturbation(const PowerInjection& spec, const PerturbationVector& u, const CaseData& data);

/// Column-wise version for a d_in x B perturbation batch; returns n x B spec matrices.
void apply_perturbation_batch(const PowerInjection& spec, const Eigen::MatrixXd& U, const CaseData& data,
                              Eigen::MatrixXd& P_spec, Eigen::MatrixXd& Q_spec);

/// Vector-Jacobian product of the injections through the complex form. Given
/// cotangents a (for P) and b (for Q), both n x B, returns d/dV and d/dtheta of
/// sum(a .* P + b .* Q) for each sample.
void power_vjp(const Eigen::MatrixXd& V, const Eigen::MatrixXd& theta, const AdmittanceMatrix& y,
               const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, Eigen::MatrixXd& dV, Eigen::MatrixXd& dtheta);

/// Free variables in Newton/Jacobian order: [theta at non-slack buses; V at PQ buses].
Eigen::VectorXd free_variables(const StateVector& state, const CaseData& data);
void set_free_variables(StateVector& state, const Eigen::VectorXd& x, const CaseData& data);

/// Gradient of the energy with respect to the free variables.
Eigen::VectorXd energy_gradient(const StateVector& state, const PowerInjection& spec, const CaseData& data,
                                const AdmittanceMatrix& y);

struct GradientFlowOptions {
  double step = 1e-2;
  int max_steps = 10000;
  double tol = 1e-6;  // on residual_norm
};

struct GradientFlowResult {
  StateVector state;
  int steps = 0;
  bool converged = false;
  double initial_energy = 0.0;
  double final_energy = 0.0;
};

/// Explicit-Euler descent x <- x - h grad V(x) over the free variables. A step
/// that raises the energy is retried with h halved, at most 30 times.
GradientFlowResult gradient_flow_solve(const CaseData& data, const AdmittanceMatrix& y, const PowerInjection& spec,
                                       const StateVector& init, const GradientFlowOptions& opts);

}  // namespace neuropf
