#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "neuropf/admittance.hpp"
#include "neuropf/case_io.hpp"
#include "neuropf/errors.hpp"
#include "neuropf/network.hpp"
#include "neuropf/types.hpp"

namespace neuropf {

/// Everything the physics loss needs besides the network: the case, its
/// precomputed admittance matrix and the unperturbed specified injections.
struct PhysicsContext {
  const CaseData& data;
  const AdmittanceMatrix& y;
  PowerInjection base_spec;

  PhysicsContext(const CaseData& d, const AdmittanceMatrix& adm) : data(d), y(adm), base_spec(base_injections(d)) {}
  PhysicsContext(const CaseData& d, const AdmittanceMatrix& adm, PowerInjection spec)
      : data(d), y(adm), base_spec(std::move(spec)) {}
};

struct LossOptions {
  /// Standard deviation of Gaussian noise added to every residual before squaring.
  double smoothing_sd = 0.0;
  /// Seed of that noise; a given seed always produces the same noise matrix.
  std::uint64_t noise_seed = 0;
  /// Weight on squared reactive residuals relative to active ones.
  double dq_weight = 1.0;
};

/// Residuals of a batch of perturbations under the current network.
struct BatchResidual {
  Eigen::MatrixXd V;      // n x B
  Eigen::MatrixXd theta;  // n x B
  Eigen::MatrixXd dP;     // (n-1) x B, non-slack order
  Eigen::MatrixXd dQ;     // |PQ| x B
};

BatchResidual evaluate_batch(const NetworkParams& params, const Eigen::MatrixXd& U, const PhysicsContext& ctx);

/// Per-sample residual norm sqrt(mean dP^2 + mean dQ^2).
Eigen::VectorXd residual_norms(const BatchResidual& r);

/// Batch-mean of ||dP + noise||^2 + w ||dQ + noise||^2.
double loss(const NetworkParams& params, const Eigen::MatrixXd& U, const PhysicsContext& ctx,
            const LossOptions& opts = {});

struct GradientBundle {
  Eigen::VectorXd grad;         // mirrors NetworkParams::values()
  double loss = 0.0;
  Eigen::VectorXd sample_loss;  // per-sample summed squares (same noise as loss)
  BatchResidual residual;       // noise-free residuals of the batch

  /// View of one tensor's gradient, shaped like the parameter.
  Eigen::Map<const Eigen::MatrixXd> tensor(const ParamLayout& layout, std::size_t slot) const;
};

/// Raised when backpropagation produces a non-finite value; `layer()` is the
/// Linear layer whose gradient is affected.
class NonFiniteGradient : public NumericalError {
 public:
  NonFiniteGradient(int layer, const std::string& what) : NumericalError(what), layer_(layer) {}
  int layer() const noexcept { return layer_; }

 private:
  int layer_;
};

/// Exact gradient of loss() by reverse accumulation through the MLP, the
/// decode step and the complex power evaluation.
GradientBundle loss_and_gradient(const NetworkParams& params, const Eigen::MatrixXd& U, const PhysicsContext& ctx,
                                 const LossOptions& opts = {});

struct FdCheckResult {
  double max_rel_error = 0.0;
  Eigen::Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares the analytic gradient with central differences of loss() at
/// `sample_count` parameters drawn with `seed`. Relative error is
/// |a - f| / max(|a|, |f|); when both are below 1e-12 the absolute difference
/// is used instead.
FdCheckResult finite_difference_check(const NetworkParams& params, const Eigen::MatrixXd& U, const PhysicsContext& ctx,
                                      const LossOptions& opts, double h, int sample_count, std::uint64_t seed);

}  // namespace neuropf
