#include "neuropf/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "neuropf/errors.hpp"

namespace neuropf {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

void validate(const ArchitectureSpec& a) {
  if (a.d_in < 1 || a.d_out < 1) throw ValidationError("architecture: d_in and d_out must be positive");
  if (a.layers < 5 || a.layers > 8) throw ValidationError("architecture: layers must be in {5,6,7,8}");
  if (a.d_hidden < 256 || a.d_hidden > 512) throw ValidationError("architecture: d_hidden must be in [256, 512]");
  if (!(a.theta_scale > 0.0)) throw ValidationError("architecture: theta_scale must be positive");
}

}  // namespace

ArchitectureSpec auto_config(int d_in, int d_out, const ArchitectureOverrides& ov) {
  ArchitectureSpec a;
  a.d_in = d_in;
  a.d_out = d_out;
  a.d_hidden = std::min(std::max(2 * d_in, 256), 512);
  if (d_in <= 50) a.layers = 5;
  else if (d_in <= 150) a.layers = 6;
  else if (d_in <= 300) a.layers = 7;
  else a.layers = 8;
  if (ov.d_hidden) a.d_hidden = *ov.d_hidden;
  if (ov.layers) a.layers = *ov.layers;
  a.use_layernorm = ov.use_layernorm.value_or(a.layers >= 7);
  if (ov.theta_scale) a.theta_scale = *ov.theta_scale;
  validate(a);
  return a;
}

ArchitectureSpec auto_config(const CaseData& data, const ArchitectureOverrides& ov) {
  return auto_config(static_cast<int>(data.input_dim()), static_cast<int>(data.output_dim()), ov);
}

// ---------------------------------------------------------------------------
// Layout

ParamLayout ParamLayout::for_arch(const ArchitectureSpec& a) {
  ParamLayout p;
  auto add = [&](std::string name, Index rows, Index cols) {
    p.slots.push_back({std::move(name), rows, cols, p.total});
    p.total += rows * cols;
    return p.slots.size() - 1;
  };
  for (int l = 0; l < a.layers; ++l) {
    const Index in = l == 0 ? a.d_in : a.d_hidden;
    const Index out = l == a.layers - 1 ? a.d_out : a.d_hidden;
    const std::string tag = std::to_string(l);
    p.weight_slot.push_back(add("W" + tag, out, in));
    p.bias_slot.push_back(add("b" + tag, out, 1));
    if (a.use_layernorm && l < a.layers - 1) {
      p.gain_slot.push_back(add("ln_gain" + tag, out, 1));
      p.offset_slot.push_back(add("ln_offset" + tag, out, 1));
    }
  }
  return p;
}

int ParamLayout::layer_of(Index k) const {
  for (int l = static_cast<int>(weight_slot.size()) - 1; l >= 0; --l) {
    if (k >= slots[weight_slot[static_cast<std::size_t>(l)]].offset) return l;
  }
  return 0;
}

NetworkParams::NetworkParams(const ArchitectureSpec& arch)
    : arch_(arch), layout_(ParamLayout::for_arch(arch)), values_(VectorXd::Zero(layout_.total)) {}

Eigen::Map<MatrixXd> NetworkParams::weight(int l) {
  const auto& s = layout_.slots[layout_.weight_slot[static_cast<std::size_t>(l)]];
  return {values_.data() + s.offset, s.rows, s.cols};
}
Eigen::Map<const MatrixXd> NetworkParams::weight(int l) const {
  const auto& s = layout_.slots[layout_.weight_slot[static_cast<std::size_t>(l)]];
  return {values_.data() + s.offset, s.rows, s.cols};
}
Eigen::Map<VectorXd> NetworkParams::bias(int l) {
  const auto& s = layout_.slots[layout_.bias_slot[static_cast<std::size_t>(l)]];
  return {values_.data() + s.offset, s.rows};
}
Eigen::Map<const VectorXd> NetworkParams::bias(int l) const {
  const auto& s = layout_.slots[layout_.bias_slot[static_cast<std::size_t>(l)]];
  return {values_.data() + s.offset, s.rows};
}
Eigen::Map<VectorXd> NetworkParams::norm_gain(int l) {
  const auto& s = layout_.slots[layout_.gain_slot[static_cast<std::size_t>(l)]];
  return {values_.data() + s.offset, s.rows};
}
Eigen::Map<const VectorXd> NetworkParams::norm_gain(int l) const {
  const auto& s = layout_.slots[layout_.gain_slot[static_cast<std::size_t>(l)]];
  return {values_.data() + s.offset, s.rows};
}
Eigen::Map<VectorXd> NetworkParams::norm_offset(int l) {
  const auto& s = layout_.slots[layout_.offset_slot[static_cast<std::size_t>(l)]];
  return {values_.data() + s.offset, s.rows};
}
Eigen::Map<const VectorXd> NetworkParams::norm_offset(int l) const {
  const auto& s = layout_.slots[layout_.offset_slot[static_cast<std::size_t>(l)]];
  return {values_.data() + s.offset, s.rows};
}

// ---------------------------------------------------------------------------
// Initialization

std::vector<Index> pq_voltage_slots(const CaseData& data) {
  std::vector<Index> slots;
  const auto npv = static_cast<Index>(data.bus_sets.pv_idxs.size());
  for (std::size_t k = 0; k < data.bus_sets.pq_idxs.size(); ++k) slots.push_back(npv + 2 * static_cast<Index>(k));
  return slots;
}

NetworkParams init_network(const ArchitectureSpec& arch, std::uint64_t seed, const std::vector<Index>& pq_slots) {
  validate(arch);
  NetworkParams p(arch);
  p.seed = seed;
  std::mt19937_64 rng(seed);
  const int L = arch.layers;
  for (int l = 0; l < L - 1; ++l) {
    auto W = p.weight(l);
    const double a = std::sqrt(6.0 / static_cast<double>(W.rows() + W.cols()));
    std::uniform_real_distribution<double> dist(-a, a);
    for (Index k = 0; k < W.size(); ++k) W.data()[k] = dist(rng);
    if (arch.use_layernorm) p.norm_gain(l).setOnes();
  }
  std::normal_distribution<double> out_dist(0.0, 0.1);
  auto W = p.weight(L - 1);
  for (Index k = 0; k < W.size(); ++k) W.data()[k] = out_dist(rng);
  auto b = p.bias(L - 1);
  for (Index s : pq_slots) {
    if (s < 0 || s >= b.size()) throw ValidationError("PQ voltage slot out of range");
    b[s] = 1.0;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Forward / backward

MatrixXd forward_batch(const NetworkParams& params, const MatrixXd& U, ForwardCache* cache) {
  const auto& arch = params.arch();
  if (U.rows() != arch.d_in) {
    throw ValidationError("forward: input has " + std::to_string(U.rows()) + " rows, expected " +
                          std::to_string(arch.d_in));
  }
  const int L = arch.layers;
  if (cache != nullptr) {
    cache->inputs.assign(static_cast<std::size_t>(L), MatrixXd());
    cache->act.assign(static_cast<std::size_t>(L - 1), MatrixXd());
    cache->xhat.assign(arch.use_layernorm ? static_cast<std::size_t>(L - 1) : 0, MatrixXd());
    cache->rstd.assign(arch.use_layernorm ? static_cast<std::size_t>(L - 1) : 0, Eigen::RowVectorXd());
  }
  MatrixXd h = U;
  for (int l = 0; l < L; ++l) {
    const auto li = static_cast<std::size_t>(l);
    MatrixXd z = params.weight(l) * h;
    z.colwise() += params.bias(l);
    if (cache != nullptr) cache->inputs[li] = std::move(h);
    if (l == L - 1) return z;
    h = z.array().tanh().matrix();
    if (arch.use_layernorm) {
      if (cache != nullptr) cache->act[li] = h;
      const double inv_d = 1.0 / static_cast<double>(h.rows());
      const Eigen::RowVectorXd mu = h.colwise().sum() * inv_d;
      h.rowwise() -= mu;
      const Eigen::RowVectorXd var = h.array().square().colwise().sum().matrix() * inv_d;
      const Eigen::RowVectorXd rstd = (var.array() + kLayerNormEps).rsqrt().matrix();
      h = h * rstd.asDiagonal();
      if (cache != nullptr) {
        cache->xhat[li] = h;
        cache->rstd[li] = rstd;
      }
      h = params.norm_gain(l).asDiagonal() * h;
      h.colwise() += params.norm_offset(l);
    } else if (cache != nullptr) {
      cache->act[li] = h;
    }
  }
  return h;  // unreachable: L >= 1
}

RawOutput forward(const NetworkParams& params, const PerturbationVector& u) {
  return {forward_batch(params, u.values).col(0)};
}

VectorXd backward(const NetworkParams& params, const ForwardCache& cache, const MatrixXd& dZ) {
  const auto& arch = params.arch();
  const auto& layout = params.layout();
  const int L = arch.layers;
  VectorXd grad = VectorXd::Zero(params.size());
  auto slot_matrix = [&](std::size_t slot) {
    const auto& s = layout.slots[slot];
    return Eigen::Map<MatrixXd>(grad.data() + s.offset, s.rows, s.cols);
  };

  MatrixXd delta = dZ;  // gradient w.r.t. the current layer's pre-activation output
  for (int l = L - 1; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    slot_matrix(layout.weight_slot[li]).noalias() = delta * cache.inputs[li].transpose();
    slot_matrix(layout.bias_slot[li]) = delta.rowwise().sum();
    if (l == 0) break;
    // Gradient w.r.t. the previous hidden block's output.
    MatrixXd dh = params.weight(l).transpose() * delta;
    const auto pi = li - 1;
    if (arch.use_layernorm) {
      const MatrixXd& xhat = cache.xhat[pi];
      slot_matrix(layout.gain_slot[pi]) = dh.cwiseProduct(xhat).rowwise().sum();
      slot_matrix(layout.offset_slot[pi]) = dh.rowwise().sum();
      const MatrixXd dxhat = params.norm_gain(l - 1).asDiagonal() * dh;
      const double inv_d = 1.0 / static_cast<double>(xhat.rows());
      const Eigen::RowVectorXd mean_d = dxhat.colwise().sum() * inv_d;
      const Eigen::RowVectorXd mean_dx = dxhat.cwiseProduct(xhat).colwise().sum() * inv_d;
      dh = dxhat;
      dh.rowwise() -= mean_d;
      dh -= xhat * mean_dx.asDiagonal();
      dh = dh * cache.rstd[pi].asDiagonal();
    }
    // tanh' = 1 - tanh^2
    delta = dh.cwiseProduct((1.0 - cache.act[pi].array().square()).matrix());
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Decode

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void decode_batch(const MatrixXd& Z, const CaseData& data, double theta_scale, MatrixXd& V, MatrixXd& theta) {
  const auto& sets = data.bus_sets;
  const auto n = static_cast<Index>(data.bus_count());
  if (Z.rows() != static_cast<Index>(data.output_dim())) throw ValidationError("decode: raw output size mismatch");
  const Index B = Z.cols();
  V.resize(n, B);
  theta.resize(n, B);
  const auto slack = static_cast<Index>(sets.slack_idx);
  V.row(slack).setConstant(data.voltage_setpoint(sets.slack_idx));
  theta.row(slack).setConstant(data.slack_angle());
  Index row = 0;
  for (std::size_t i : sets.pv_idxs) {
    const auto k = static_cast<Index>(i);
    V.row(k).setConstant(data.voltage_setpoint(i));
    theta.row(k) = theta_scale * Z.row(row++).array().tanh();
  }
  for (std::size_t i : sets.pq_idxs) {
    const auto k = static_cast<Index>(i);
    V.row(k) = Z.row(row++).unaryExpr([](double z) { return softplus(z) + 0.5; });
    theta.row(k) = theta_scale * Z.row(row++).array().tanh();
  }
}

StateVector decode(const RawOutput& raw, const CaseData& data, double theta_scale) {
  MatrixXd V;
  MatrixXd theta;
  decode_batch(raw.z, data, theta_scale, V, theta);
  return {V.col(0), theta.col(0)};
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  using nlohmann::json;
  const auto& a = ckpt.params.arch();
  json doc;
  doc["format"] = "neuropf-checkpoint";
  doc["version"] = 1;
  doc["arch"] = {{"d_in", a.d_in},         {"d_out", a.d_out},
                 {"d_hidden", a.d_hidden}, {"layers", a.layers},
                 {"use_layernorm", a.use_layernorm}, {"theta_scale", a.theta_scale}};
  doc["seed"] = ckpt.params.seed;
  doc["metadata"] = ckpt.metadata;
  json layout = json::array();
  for (const auto& s : ckpt.params.layout().slots) layout.push_back({{"name", s.name}, {"rows", s.rows}, {"cols", s.cols}});
  doc["layout"] = std::move(layout);
  const auto& v = ckpt.params.values();
  doc["values"] = std::vector<double>(v.data(), v.data() + v.size());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::ios_base::failure("cannot write checkpoint: " + path.string());
  out << doc.dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  using nlohmann::json;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open checkpoint: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  try {
    if (doc.at("format") != "neuropf-checkpoint") throw ParseError("checkpoint: unknown format");
    if (doc.at("version").get<int>() != 1) throw ParseError("checkpoint: unsupported version");
    const json& a = doc.at("arch");
    ArchitectureSpec arch;
    arch.d_in = a.at("d_in").get<int>();
    arch.d_out = a.at("d_out").get<int>();
    arch.d_hidden = a.at("d_hidden").get<int>();
    arch.layers = a.at("layers").get<int>();
    arch.use_layernorm = a.at("use_layernorm").get<bool>();
    arch.theta_scale = a.at("theta_scale").get<double>();
    validate(arch);
    Checkpoint ck{NetworkParams(arch), {}};
    ck.params.seed = doc.at("seed").get<std::uint64_t>();
    ck.metadata = doc.at("metadata").get<std::map<std::string, std::string>>();
    const auto values = doc.at("values").get<std::vector<double>>();
    if (static_cast<Index>(values.size()) != ck.params.size()) throw ParseError("checkpoint: parameter count mismatch");
    ck.params.values() = Eigen::Map<const VectorXd>(values.data(), static_cast<Index>(values.size()));
    return ck;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace neuropf
