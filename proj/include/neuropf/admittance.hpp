#pragma once

#include <complex>

#include <Eigen/SparseCore>

#include "neuropf/case_io.hpp"

namespace neuropf {

using Complex = std::complex<double>;
using SparseComplex = Eigen::SparseMatrix<Complex>;
using SparseReal = Eigen::SparseMatrix<double>;

/// Nodal admittance matrix Y = G + jB in internal bus order. Built once per case
/// and shared read-only by every residual evaluation.
struct AdmittanceMatrix {
  Eigen::Index n = 0;
  SparseComplex Y;
  SparseComplex Yt;  // transpose, kept for adjoint products
  SparseReal G;
  SparseReal B;
};

/// Standard pi-model assembly: series admittance, line charging, off-nominal
/// tap with phase shift, and bus shunts (Gs + jBs) / base_MVA.
AdmittanceMatrix build_ybus(const CaseData& data);

}  // namespace neuropf
