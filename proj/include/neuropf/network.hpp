#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "neuropf/case_io.hpp"
#include "neuropf/power_flow.hpp"
#include "neuropf/types.hpp"

namespace neuropf {

/// MLP shape. `layers` counts Linear layers, input and output included, so the
/// network has layers - 1 hidden Tanh blocks.
struct ArchitectureSpec {
  int d_in = 0;
  int d_out = 0;
  int d_hidden = 256;
  int layers = 5;
  bool use_layernorm = false;
  double theta_scale = std::numbers::pi / 2.0;

  bool operator==(const ArchitectureSpec&) const = default;
};

struct ArchitectureOverrides {
  std::optional<int> d_hidden;
  std::optional<int> layers;
  std::optional<bool> use_layernorm;
  std::optional<double> theta_scale;
};

/// Width min(max(2 d_in, 256), 512); depth 5/6/7/8 by d_in thresholds 50/150/300;
/// LayerNorm from 7 layers up. Overrides win and are validated.
ArchitectureSpec auto_config(int d_in, int d_out, const ArchitectureOverrides& overrides = {});

/// Architecture sized for a case: d_in = 2|PQ| + |PV|, d_out = |PV| + 2|PQ|.
ArchitectureSpec auto_config(const CaseData& data, const ArchitectureOverrides& overrides = {});

/// One named tensor inside the flat parameter vector (column-major).
struct TensorSlot {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index offset = 0;

  Eigen::Index size() const { return rows * cols; }
};

/// Order: for each Linear layer l, W_l then b_l, followed by the LayerNorm
/// gain/offset of that layer when it is a hidden layer and norms are enabled.
struct ParamLayout {
  std::vector<TensorSlot> slots;
  std::vector<std::size_t> weight_slot;
  std::vector<std::size_t> bias_slot;
  std::vector<std::size_t> gain_slot;    // hidden layers only
  std::vector<std::size_t> offset_slot;  // hidden layers only
  Eigen::Index total = 0;

  static ParamLayout for_arch(const ArchitectureSpec& arch);
  /// Linear layer that owns flat index `k`.
  int layer_of(Eigen::Index k) const;
};

/// Network parameters stored as one flat vector; tensors are views into it.
class NetworkParams {
 public:
  NetworkParams() = default;
  explicit NetworkParams(const ArchitectureSpec& arch);

  const ArchitectureSpec& arch() const { return arch_; }
  const ParamLayout& layout() const { return layout_; }
  Eigen::Index size() const { return values_.size(); }
  Eigen::VectorXd& values() { return values_; }
  const Eigen::VectorXd& values() const { return values_; }

  int num_layers() const { return arch_.layers; }
  Eigen::Map<Eigen::MatrixXd> weight(int layer);
  Eigen::Map<const Eigen::MatrixXd> weight(int layer) const;
  Eigen::Map<Eigen::VectorXd> bias(int layer);
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;
  Eigen::Map<const Eigen::VectorXd> norm_gain(int layer) const;
  Eigen::Map<const Eigen::VectorXd> norm_offset(int layer) const;
  Eigen::Map<Eigen::VectorXd> norm_gain(int layer);
  Eigen::Map<Eigen::VectorXd> norm_offset(int layer);

  std::uint64_t seed = 0;

 private:
  ArchitectureSpec arch_;
  ParamLayout layout_;
  Eigen::VectorXd values_;
};

/// Xavier-uniform hidden weights, zero hidden biases, N(0, 0.1^2) output
/// weights, output bias 1.0 on PQ-voltage slots and 0 on angle slots.
/// `pq_voltage_slots` lists output rows that decode to PQ voltages.
NetworkParams init_network(const ArchitectureSpec& arch, std::uint64_t seed,
                           const std::vector<Eigen::Index>& pq_voltage_slots);

/// Output rows holding PQ voltages: layout [z_theta per PV; (z_V, z_theta) per PQ].
std::vector<Eigen::Index> pq_voltage_slots(const CaseData& data);

/// Network raw output, layout [z_theta per PV; (z_V, z_theta) per PQ].
struct RawOutput {
  Eigen::VectorXd z;
};

/// Intermediate values of a batched forward pass, kept for backpropagation.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;  // input to each Linear layer
  std::vector<Eigen::MatrixXd> act;     // tanh output of hidden layers
  std::vector<Eigen::MatrixXd> xhat;    // normalized activations (LayerNorm only)
  std::vector<Eigen::RowVectorXd> rstd; // 1/sqrt(var + eps) per sample (LayerNorm only)
};

inline constexpr double kLayerNormEps = 1e-5;

/// Batched forward: U is d_in x B, returns d_out x B.
Eigen::MatrixXd forward_batch(const NetworkParams& params, const Eigen::MatrixXd& U, ForwardCache* cache = nullptr);

RawOutput forward(const NetworkParams& params, const PerturbationVector& u);

/// Backpropagates dL/dZ (d_out x B) through the cached pass; returns the flat
/// parameter gradient.
Eigen::VectorXd backward(const NetworkParams& params, const ForwardCache& cache, const Eigen::MatrixXd& dZ);

/// log(1 + e^z) without overflow.
double softplus(double z);
double sigmoid(double z);

/// Decodes raw output into the full state: PV theta = s tanh(z), V at setpoint;
/// PQ V = softplus(z_V) + 0.5, theta = s tanh(z_theta); slack at its reference.
StateVector decode(const RawOutput& raw, const CaseData& data, double theta_scale);

/// Batched decode into n x B magnitude/angle matrices.
void decode_batch(const Eigen::MatrixXd& Z, const CaseData& data, double theta_scale, Eigen::MatrixXd& V,
                  Eigen::MatrixXd& theta);

/// Checkpoint container (JSON, format "neuropf-checkpoint", version 1).
struct Checkpoint {
  NetworkParams params;
  std::map<std::string, std::string> metadata;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace neuropf
