#pragma once

#include <Eigen/Core>

namespace neuropf {

/// Per-bus voltage magnitude (p.u.) and angle (rad), internal bus order.
struct StateVector {
  Eigen::VectorXd V;
  Eigen::VectorXd theta;
};

/// Per-bus active/reactive injection in p.u.
struct PowerInjection {
  Eigen::VectorXd P;
  Eigen::VectorXd Q;
};

}  // namespace neuropf
