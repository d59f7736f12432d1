#include "neuropf/grad_engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace neuropf {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Forward {
  ForwardCache cache;
  MatrixXd Z;
  BatchResidual res;
};

Forward run_forward(const NetworkParams& params, const MatrixXd& U, const PhysicsContext& ctx, bool keep_cache) {
  Forward f;
  f.Z = forward_batch(params, U, keep_cache ? &f.cache : nullptr);
  decode_batch(f.Z, ctx.data, params.arch().theta_scale, f.res.V, f.res.theta);
  MatrixXd P;
  MatrixXd Q;
  power_complex_batch(f.res.V, f.res.theta, ctx.y, P, Q);
  MatrixXd P_spec;
  MatrixXd Q_spec;
  apply_perturbation_batch(ctx.base_spec, U, ctx.data, P_spec, Q_spec);
  const auto& sets = ctx.data.bus_sets;
  f.res.dP.resize(static_cast<Index>(sets.non_slack.size()), U.cols());
  f.res.dQ.resize(static_cast<Index>(sets.pq_idxs.size()), U.cols());
  for (std::size_t k = 0; k < sets.non_slack.size(); ++k) {
    const auto i = static_cast<Index>(sets.non_slack[k]);
    f.res.dP.row(static_cast<Index>(k)) = P_spec.row(i) - P.row(i);
  }
  for (std::size_t k = 0; k < sets.pq_idxs.size(); ++k) {
    const auto i = static_cast<Index>(sets.pq_idxs[k]);
    f.res.dQ.row(static_cast<Index>(k)) = Q_spec.row(i) - Q.row(i);
  }
  return f;
}

// Residuals with smoothing noise applied; noise is a pure function of the seed.
void noisy_residuals(const BatchResidual& r, const LossOptions& opts, MatrixXd& rP, MatrixXd& rQ) {
  rP = r.dP;
  rQ = r.dQ;
  if (opts.smoothing_sd <= 0.0) return;
  std::mt19937_64 rng(opts.noise_seed);
  std::normal_distribution<double> dist(0.0, opts.smoothing_sd);
  for (Index c = 0; c < rP.cols(); ++c) {
    for (Index k = 0; k < rP.rows(); ++k) rP(k, c) += dist(rng);
    for (Index k = 0; k < rQ.rows(); ++k) rQ(k, c) += dist(rng);
  }
}

VectorXd sample_losses(const MatrixXd& rP, const MatrixXd& rQ, double dq_weight) {
  VectorXd out = rP.colwise().squaredNorm().transpose();
  if (rQ.rows() > 0) out += dq_weight * rQ.colwise().squaredNorm().transpose();
  return out;
}

}  // namespace

BatchResidual evaluate_batch(const NetworkParams& params, const MatrixXd& U, const PhysicsContext& ctx) {
  return run_forward(params, U, ctx, false).res;
}

VectorXd residual_norms(const BatchResidual& r) {
  const Index B = r.dP.cols();
  VectorXd out = VectorXd::Zero(B);
  if (r.dP.rows() > 0) out += r.dP.colwise().squaredNorm().transpose() / static_cast<double>(r.dP.rows());
  if (r.dQ.rows() > 0) out += r.dQ.colwise().squaredNorm().transpose() / static_cast<double>(r.dQ.rows());
  return out.cwiseSqrt();
}

double loss(const NetworkParams& params, const MatrixXd& U, const PhysicsContext& ctx, const LossOptions& opts) {
  if (U.cols() == 0) throw ValidationError("loss: empty batch");
  const Forward f = run_forward(params, U, ctx, false);
  MatrixXd rP;
  MatrixXd rQ;
  noisy_residuals(f.res, opts, rP, rQ);
  return sample_losses(rP, rQ, opts.dq_weight).mean();
}

Eigen::Map<const MatrixXd> GradientBundle::tensor(const ParamLayout& layout, std::size_t slot) const {
  const auto& s = layout.slots[slot];
  return {grad.data() + s.offset, s.rows, s.cols};
}

GradientBundle loss_and_gradient(const NetworkParams& params, const MatrixXd& U, const PhysicsContext& ctx,
                                 const LossOptions& opts) {
  if (U.cols() == 0) throw ValidationError("loss_and_gradient: empty batch");
  Forward f = run_forward(params, U, ctx, true);
  MatrixXd rP;
  MatrixXd rQ;
  noisy_residuals(f.res, opts, rP, rQ);

  GradientBundle out;
  out.sample_loss = sample_losses(rP, rQ, opts.dq_weight);
  out.loss = out.sample_loss.mean();

  const auto& data = ctx.data;
  const auto& sets = data.bus_sets;
  const Index n = static_cast<Index>(data.bus_count());
  const Index B = U.cols();
  const double scale = 2.0 / static_cast<double>(B);

  // Cotangents of the loss w.r.t. calculated P and Q (residual = spec - calc).
  MatrixXd a = MatrixXd::Zero(n, B);
  MatrixXd b = MatrixXd::Zero(n, B);
  for (std::size_t k = 0; k < sets.non_slack.size(); ++k) {
    a.row(static_cast<Index>(sets.non_slack[k])) = -scale * rP.row(static_cast<Index>(k));
  }
  for (std::size_t k = 0; k < sets.pq_idxs.size(); ++k) {
    b.row(static_cast<Index>(sets.pq_idxs[k])) = -scale * opts.dq_weight * rQ.row(static_cast<Index>(k));
  }
  MatrixXd dV;
  MatrixXd dtheta;
  power_vjp(f.res.V, f.res.theta, ctx.y, a, b, dV, dtheta);

  // Through the decode step.
  const double s = params.arch().theta_scale;
  MatrixXd dZ(f.Z.rows(), B);
  auto angle_grad = [&](Index row, Index bus) {
    dZ.row(row) = dtheta.row(bus).array() * s * (1.0 - f.Z.row(row).array().tanh().square());
  };
  Index row = 0;
  for (std::size_t i : sets.pv_idxs) {
    angle_grad(row, static_cast<Index>(i));
    ++row;
  }
  for (std::size_t i : sets.pq_idxs) {
    const auto bus = static_cast<Index>(i);
    dZ.row(row) = dV.row(bus).array() * f.Z.row(row).unaryExpr([](double z) { return sigmoid(z); }).array();
    ++row;
    angle_grad(row, bus);
    ++row;
  }

  out.grad = backward(params, f.cache, dZ);
  if (!out.grad.allFinite()) {
    for (Index k = 0; k < out.grad.size(); ++k) {
      if (!std::isfinite(out.grad[k])) {
        const int layer = params.layout().layer_of(k);
        throw NonFiniteGradient(layer, "non-finite gradient in layer " + std::to_string(layer));
      }
    }
  }
  out.residual = std::move(f.res);
  return out;
}

FdCheckResult finite_difference_check(const NetworkParams& params, const MatrixXd& U, const PhysicsContext& ctx,
                                      const LossOptions& opts, double h, int sample_count, std::uint64_t seed) {
  const GradientBundle g = loss_and_gradient(params, U, ctx, opts);
  std::vector<Index> order(static_cast<std::size_t>(params.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  const auto count = std::min<std::size_t>(static_cast<std::size_t>(std::max(sample_count, 0)), order.size());
  for (std::size_t k = 0; k < count; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, order.size() - 1);
    std::swap(order[k], order[pick(rng)]);
  }

  FdCheckResult out;
  NetworkParams probe = params;
  for (std::size_t k = 0; k < count; ++k) {
    const Index idx = order[k];
    const double orig = params.values()[idx];
    probe.values()[idx] = orig + h;
    const double up = loss(probe, U, ctx, opts);
    probe.values()[idx] = orig - h;
    const double down = loss(probe, U, ctx, opts);
    probe.values()[idx] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double analytic = g.grad[idx];
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    const double diff = std::abs(analytic - numeric);
    const double err = scale < 1e-12 ? diff : diff / scale;
    if (err > out.max_rel_error || out.worst_index < 0) {
      out.max_rel_error = err;
      out.worst_index = idx;
      out.worst_analytic = analytic;
      out.worst_numeric = numeric;
    }
  }
  return out;
}

}  // namespace neuropf
