#pragma once

#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "neuropf/admittance.hpp"
#include "neuropf/case_io.hpp"
#include "neuropf/power_flow.hpp"
#include "neuropf/types.hpp"

namespace neuropf {

struct NewtonOptions {
  double tol = 1e-6;  // on ||F||_inf
  int max_iter = 50;
  bool flat_start = true;
};

struct NewtonResult {
  StateVector state;
  int iterations = 0;
  bool converged = false;
  double final_mismatch_inf = 0.0;
  std::vector<double> history;  // ||F||_inf before each iteration and at exit
  std::string diagnosis;        // set when the solve fails
};

/// V = 1 at PQ buses, setpoint at PV/slack; every angle equal to the slack angle.
StateVector flat_start(const CaseData& data);

/// Voltages and angles stored in the case file (PV/slack magnitudes at setpoint).
StateVector case_start(const CaseData& data);

/// Derivative of the calculated injections with respect to the free variables.
/// Rows follow ResidualVector ([P at non-slack; Q at PQ]); columns follow
/// free_variables ([theta at non-slack; V at PQ]).
SparseReal jacobian(const StateVector& state, const AdmittanceMatrix& y, const CaseData& data);

/// Newton-Raphson from `init` ; without `init`, opts.flat_start picks flat_start()
/// over case_start().
NewtonResult solve_newton(const CaseData& data, const AdmittanceMatrix& y, const PowerInjection& spec,
                          const NewtonOptions& opts = {}, const StateVector* init = nullptr);

}  // namespace neuropf
