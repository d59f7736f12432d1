#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Everything here is dense and written from the textbook formulas, sharing no
// code with the library beyond the case data types.

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "neuropf/case_io.hpp"
#include "neuropf/power_flow.hpp"

namespace oracle {

using neuropf::CaseData;
using cplx = std::complex<double>;

inline std::string data_path(const std::string& file) { return std::string(NEUROPF_DATA_DIR) + "/" + file; }

inline int dense_index(const CaseData& d, int bus_id) {
  for (std::size_t i = 0; i < d.buses.size(); ++i) {
    if (d.buses[i].id == bus_id) return static_cast<int>(i);
  }
  return -1;
}

/// Y assembled entry by entry from the pi-model 2x2 branch stamp.
inline Eigen::MatrixXcd dense_ybus(const CaseData& d) {
  const auto n = static_cast<Eigen::Index>(d.buses.size());
  Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(n, n);
  const double deg = std::numbers::pi / 180.0;
  for (const auto& br : d.branches) {
    if (!br.status) continue;
    const int f = dense_index(d, br.from);
    const int t = dense_index(d, br.to);
    const cplx ys = 1.0 / cplx(br.r, br.x);
    const cplx bc(0.0, br.b / 2.0);
    const double ratio = br.tap == 0.0 ? 1.0 : br.tap;
    const cplx tc = std::polar(ratio, br.shift * deg);
    const cplx yff = (ys + bc) / (ratio * ratio);
    const cplx yft = -ys / std::conj(tc);
    const cplx ytf = -ys / tc;
    const cplx ytt = ys + bc;
    Y(f, f) += yff;
    Y(f, t) += yft;
    Y(t, f) += ytf;
    Y(t, t) += ytt;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& b = d.buses[static_cast<std::size_t>(i)];
    Y(i, i) += cplx(b.Gs, b.Bs) / d.base_MVA;
  }
  return Y;
}

/// P_i = V_i sum_j V_j (G_ij cos t_ij + B_ij sin t_ij), Q_i = V_i sum_j V_j (G_ij sin t_ij - B_ij cos t_ij).
inline void dense_power(const Eigen::MatrixXcd& Y, const Eigen::VectorXd& V, const Eigen::VectorXd& th,
                        Eigen::VectorXd& P, Eigen::VectorXd& Q) {
  const auto n = V.size();
  P = Eigen::VectorXd::Zero(n);
  Q = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double g = Y(i, j).real();
      const double b = Y(i, j).imag();
      const double t = th[i] - th[j];
      P[i] += V[i] * V[j] * (g * std::cos(t) + b * std::sin(t));
      Q[i] += V[i] * V[j] * (g * std::sin(t) - b * std::cos(t));
    }
  }
}

/// Residual F = spec - calc stacked as [P non-slack; Q PQ].
inline Eigen::VectorXd dense_mismatch(const CaseData& d, const Eigen::MatrixXcd& Y, const Eigen::VectorXd& V,
                                      const Eigen::VectorXd& th, const Eigen::VectorXd& Pspec,
                                      const Eigen::VectorXd& Qspec) {
  Eigen::VectorXd P, Q;
  dense_power(Y, V, th, P, Q);
  const auto& s = d.bus_sets;
  Eigen::VectorXd F(static_cast<Eigen::Index>(s.non_slack.size() + s.pq_idxs.size()));
  Eigen::Index k = 0;
  for (auto i : s.non_slack) F[k++] = Pspec[static_cast<Eigen::Index>(i)] - P[static_cast<Eigen::Index>(i)];
  for (auto i : s.pq_idxs) F[k++] = Qspec[static_cast<Eigen::Index>(i)] - Q[static_cast<Eigen::Index>(i)];
  return F;
}

/// Central-difference Jacobian of calculated injections over [theta non-slack; V PQ].
inline Eigen::MatrixXd fd_jacobian(const CaseData& d, const Eigen::MatrixXcd& Y, const Eigen::VectorXd& V0,
                                   const Eigen::VectorXd& th0, double h) {
  const auto& s = d.bus_sets;
  const auto m = static_cast<Eigen::Index>(s.non_slack.size() + s.pq_idxs.size());
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(V0.size());
  Eigen::MatrixXd J(m, m);
  auto calc = [&](const Eigen::VectorXd& V, const Eigen::VectorXd& th) {
    return Eigen::VectorXd(-dense_mismatch(d, Y, V, th, zero, zero));
  };
  Eigen::Index col = 0;
  for (auto i : s.non_slack) {
    Eigen::VectorXd tp = th0, tm = th0;
    tp[static_cast<Eigen::Index>(i)] += h;
    tm[static_cast<Eigen::Index>(i)] -= h;
    J.col(col++) = (calc(V0, tp) - calc(V0, tm)) / (2.0 * h);
  }
  for (auto i : s.pq_idxs) {
    Eigen::VectorXd vp = V0, vm = V0;
    vp[static_cast<Eigen::Index>(i)] += h;
    vm[static_cast<Eigen::Index>(i)] -= h;
    J.col(col++) = (calc(vp, th0) - calc(vm, th0)) / (2.0 * h);
  }
  return J;
}

/// Random state with slack at its reference values.
inline neuropf::StateVector random_state(const CaseData& d, std::mt19937_64& rng, double vlo, double vhi, double tlo,
                                         double thi) {
  std::uniform_real_distribution<double> uv(vlo, vhi), ut(tlo, thi);
  const auto n = static_cast<Eigen::Index>(d.buses.size());
  neuropf::StateVector s{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    s.V[i] = uv(rng);
    s.theta[i] = ut(rng);
  }
  const auto k = static_cast<Eigen::Index>(d.bus_sets.slack_idx);
  s.V[k] = d.voltage_setpoint(d.bus_sets.slack_idx);
  s.theta[k] = d.slack_angle();
  return s;
}

/// Slack bus 1 and PQ bus 2 joined by a lossless x = 0.1 line, base 100 MVA.
inline CaseData two_bus_case(double pd2 = 0.0, double qd2 = 0.0) {
  CaseData d;
  d.name = "two_bus";
  d.base_MVA = 100.0;
  neuropf::Bus b1;
  b1.id = 1;
  b1.bus_type = neuropf::BusType::Slack;
  b1.Vm = 1.0;
  neuropf::Bus b2;
  b2.id = 2;
  b2.bus_type = neuropf::BusType::PQ;
  b2.Vm = 1.0;
  b2.Pd = pd2;
  b2.Qd = qd2;
  d.buses = {b1, b2};
  neuropf::Branch br;
  br.from = 1;
  br.to = 2;
  br.x = 0.1;
  d.branches = {br};
  neuropf::Generator g;
  g.bus = 1;
  g.Vg = 1.0;
  d.gens = {g};
  neuropf::finalize_case(d);
  return d;
}

/// One slack bus with a 100 MW shunt conductance and no branches.
inline CaseData shunt_case() {
  CaseData d;
  d.name = "shunt";
  d.base_MVA = 100.0;
  neuropf::Bus b;
  b.id = 1;
  b.bus_type = neuropf::BusType::Slack;
  b.Vm = 1.0;
  b.Gs = 100.0;
  d.buses = {b};
  neuropf::finalize_case(d);
  return d;
}

}  // namespace oracle
