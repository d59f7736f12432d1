#include "neuropf/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "neuropf/errors.hpp"
#include "neuropf/grad_engine.hpp"

namespace neuropf {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

std::string_view to_string(Schedule s) {
  switch (s) {
    case Schedule::ThreeStage: return "three_stage";
    case Schedule::LhsOnly: return "lhs_only";
    case Schedule::RandomUniform: return "random_uniform";
  }
  return "unknown";
}

Schedule schedule_from_string(std::string_view s) {
  for (Schedule v : {Schedule::ThreeStage, Schedule::LhsOnly, Schedule::RandomUniform}) {
    if (to_string(v) == s) return v;
  }
  throw ValidationError("unknown schedule '" + std::string(s) + "'");
}

void TrainingConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(lr_min > 0.0) || !(lr_init > lr_min)) throw ValidationError("need lr_init > lr_min > 0");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight_decay must be >= 0");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) throw ValidationError("plateau_factor must be in (0, 1)");
  if (plateau_patience < 0) throw ValidationError("plateau_patience must be >= 0");
  if (!(clip_max_norm > 0.0)) throw ValidationError("clip_max_norm must be > 0");
  if (!(smoothing_sd >= 0.0)) throw ValidationError("smoothing_sd must be >= 0");
  if (!(dq_weight >= 0.0)) throw ValidationError("dq_weight must be >= 0");
  if (log_period < 1) throw ValidationError("log_period must be >= 1");
  if (checkpoint_period < 0) throw ValidationError("checkpoint_period must be >= 0");
  sampling.validate();
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ValidationError("invalid number for " + std::string(key) + ": '" + t + "'");
  }
  return v;
}

template <typename Int>
Int parse_int(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  Int v{};
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ValidationError("invalid integer for " + std::string(key) + ": '" + t + "'");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw ValidationError("invalid boolean for " + std::string(key) + ": '" + t + "'");
}

void flatten(const json& j, const std::string& prefix, TrainingConfig& cfg) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    const json& v = it.value();
    if (v.is_object()) {
      flatten(v, key, cfg);
    } else if (v.is_array()) {
      std::string joined;
      for (const auto& e : v) {
        if (!joined.empty()) joined += ",";
        joined += e.dump();
      }
      apply_setting(cfg, key, joined);
    } else if (v.is_string()) {
      apply_setting(cfg, key, v.get<std::string>());
    } else {
      apply_setting(cfg, key, v.dump());
    }
  }
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void apply_setting(TrainingConfig& c, std::string_view key, std::string_view value) {
  auto& s = c.sampling;
  if (key == "epochs") c.epochs = parse_int<int>(key, value);
  else if (key == "batch_size") c.batch_size = parse_int<int>(key, value);
  else if (key == "lr_init") c.lr_init = parse_double(key, value);
  else if (key == "weight_decay") c.weight_decay = parse_double(key, value);
  else if (key == "lr_min") c.lr_min = parse_double(key, value);
  else if (key == "plateau_factor") c.plateau_factor = parse_double(key, value);
  else if (key == "plateau_patience") c.plateau_patience = parse_int<int>(key, value);
  else if (key == "plateau_rel_eps") c.plateau_rel_eps = parse_double(key, value);
  else if (key == "clip_max_norm") c.clip_max_norm = parse_double(key, value);
  else if (key == "smoothing_sd") c.smoothing_sd = parse_double(key, value);
  else if (key == "dq_weight") c.dq_weight = parse_double(key, value);
  else if (key == "seed") c.seed = parse_int<std::uint64_t>(key, value);
  else if (key == "log_period") c.log_period = parse_int<int>(key, value);
  else if (key == "schedule") c.schedule = schedule_from_string(trim(value));
  else if (key == "checkpoint_period") c.checkpoint_period = parse_int<int>(key, value);
  else if (key == "sampling.delta") s.delta = parse_double(key, value);
  else if (key == "sampling.stage_fractions") {
    std::array<double, 3> f{};
    std::size_t start = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      const auto comma = value.find(',', start);
      if ((i < 2) != (comma != std::string_view::npos)) {
        throw ValidationError("sampling.stage_fractions needs three comma-separated values");
      }
      f[i] = parse_double(key, value.substr(start, comma == std::string_view::npos ? value.npos : comma - start));
      start = comma + 1;
    }
    s.stage_fractions = f;
  } else if (key == "sampling.adapt_update_period") s.adapt_update_period = parse_int<int>(key, value);
  else if (key == "sampling.top_fraction") s.top_fraction = parse_double(key, value);
  else if (key == "sampling.local_sd") s.local_sd = parse_double(key, value);
  else if (key == "sampling.local_sd_literal") s.local_sd_literal = parse_bool(key, value);
  else if (key == "sampling.aug_sd_factor") s.aug_sd_factor = parse_double(key, value);
  else if (key == "sampling.buffer_capacity") s.buffer_capacity = parse_int<std::size_t>(key, value);
  else if (key == "sampling.buffer_loss_threshold") s.buffer_loss_threshold = parse_double(key, value);
  else if (key == "arch.d_hidden") c.arch.d_hidden = parse_int<int>(key, value);
  else if (key == "arch.layers") c.arch.layers = parse_int<int>(key, value);
  else if (key == "arch.use_layernorm") c.arch.use_layernorm = parse_bool(key, value);
  else if (key == "arch.theta_scale") c.arch.theta_scale = parse_double(key, value);
  else throw ValidationError("unknown config key '" + std::string(key) + "'");
}

TrainingConfig load_training_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ParseError("config " + path.string() + ": top level must be an object");
  TrainingConfig cfg;
  flatten(j, "", cfg);
  return cfg;
}

std::string config_to_json(const TrainingConfig& c) {
  json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr_init"] = c.lr_init;
  j["weight_decay"] = c.weight_decay;
  j["lr_min"] = c.lr_min;
  j["plateau_factor"] = c.plateau_factor;
  j["plateau_patience"] = c.plateau_patience;
  j["plateau_rel_eps"] = c.plateau_rel_eps;
  j["clip_max_norm"] = c.clip_max_norm;
  j["smoothing_sd"] = c.smoothing_sd;
  j["dq_weight"] = c.dq_weight;
  j["seed"] = c.seed;
  j["log_period"] = c.log_period;
  j["schedule"] = std::string(to_string(c.schedule));
  j["checkpoint_period"] = c.checkpoint_period;
  const auto& s = c.sampling;
  j["sampling"] = {{"delta", s.delta},
                   {"stage_fractions", s.stage_fractions},
                   {"adapt_update_period", s.adapt_update_period},
                   {"top_fraction", s.top_fraction},
                   {"local_sd", s.local_sd},
                   {"local_sd_literal", s.local_sd_literal},
                   {"aug_sd_factor", s.aug_sd_factor},
                   {"buffer_capacity", s.buffer_capacity},
                   {"buffer_loss_threshold", s.buffer_loss_threshold}};
  json arch = json::object();
  if (c.arch.d_hidden) arch["d_hidden"] = *c.arch.d_hidden;
  if (c.arch.layers) arch["layers"] = *c.arch.layers;
  if (c.arch.use_layernorm) arch["use_layernorm"] = *c.arch.use_layernorm;
  if (c.arch.theta_scale) arch["theta_scale"] = *c.arch.theta_scale;
  j["arch"] = arch;
  return j.dump();
}

std::string config_digest(const TrainingConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config_to_json(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double cosine_lr(double t, double t_max, double lr_max, double lr_min) {
  if (t_max <= 0.0) return lr_max;
  const double tt = std::clamp(t, 0.0, t_max);
  return lr_min + (lr_max - lr_min) * 0.5 * (1.0 + std::cos(std::numbers::pi * tt / t_max));
}

PlateauTracker::PlateauTracker(double factor, int patience, double rel_eps, double min_scale)
    : factor_(factor), patience_(patience), rel_eps_(rel_eps), min_scale_(min_scale),
      best_(std::numeric_limits<double>::infinity()) {}

double PlateauTracker::update(double loss) {
  if (loss < best_ - rel_eps_ * std::abs(best_) || !std::isfinite(best_)) {
    best_ = loss;
    counter_ = 0;
    return scale_;
  }
  ++counter_;
  if (counter_ > patience_) {
    scale_ = std::max(scale_ * factor_, min_scale_);
    counter_ = 0;
  }
  return scale_;
}

double clip_gradients(VectorXd& grad, double max_norm) {
  const double norm = grad.norm();
  if (norm > max_norm && norm > 0.0) {
    double scale = max_norm / norm;
    grad *= scale;
    // rounding can leave the result a few ulps above the cap
    while (grad.norm() > max_norm) {
      const double next = std::nextafter(scale, 0.0);
      grad *= next / scale;
      scale = next;
    }
  }
  return norm;
}

void adamw_step(VectorXd& params, const VectorXd& grad, OptimizerState& st, double lr, double weight_decay) {
  if (st.m.size() != params.size()) {
    st.m = VectorXd::Zero(params.size());
    st.v = VectorXd::Zero(params.size());
  }
  ++st.step;
  st.m = st.beta1 * st.m + (1.0 - st.beta1) * grad;
  st.v = st.beta2 * st.v + (1.0 - st.beta2) * grad.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  const double eps = st.eps;
  params.array() -= lr * ((st.m.array() / bc1) / ((st.v.array() / bc2).sqrt() + eps) + weight_decay * params.array());
}

void write_trajectory_log(std::ostream& os, const TrajectoryLog& log, const std::string& digest) {
  os << "# neuropf " << NEUROPF_VERSION << " config_digest=" << digest << "\n";
  os << kTrajectoryLogHeader << "\n";
  for (const auto& r : log.records) {
    os << r.epoch << ',' << to_string(r.stage) << ',' << fmt17(r.loss) << ',' << fmt17(r.lr) << ','
       << fmt17(r.mean_dP) << ',' << fmt17(r.mean_dQ) << ',' << fmt17(r.energy) << ',' << r.buffer_size << "\n";
  }
}

TrajectoryLog read_trajectory_log(std::istream& is) {
  TrajectoryLog log;
  std::string line;
  bool header = false;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != kTrajectoryLogHeader) throw ParseError("trajectory log: unexpected header '" + line + "'");
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 8) throw ParseError("trajectory log line " + std::to_string(lineno) + ": expected 8 fields");
    try {
      TrajectoryRecord r;
      r.epoch = parse_int<int>("epoch", f[0]);
      r.stage = stage_from_string(f[1]);
      r.loss = std::stod(f[2]);
      r.lr = std::stod(f[3]);
      r.mean_dP = std::stod(f[4]);
      r.mean_dQ = std::stod(f[5]);
      r.energy = std::stod(f[6]);
      r.buffer_size = parse_int<std::size_t>("buffer_size", f[7]);
      log.records.push_back(r);
    } catch (const std::exception& e) {
      throw ParseError("trajectory log line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!header) throw ParseError("trajectory log: missing header");
  return log;
}

namespace {

TrajectoryRecord probe_record(const NetworkParams& params, const MatrixXd& probe, const PhysicsContext& ctx) {
  const BatchResidual r = evaluate_batch(params, probe, ctx);
  TrajectoryRecord rec;
  const double B = static_cast<double>(probe.cols());
  rec.mean_dP = r.dP.size() > 0 ? r.dP.cwiseAbs().mean() : 0.0;
  rec.mean_dQ = r.dQ.size() > 0 ? r.dQ.cwiseAbs().mean() : 0.0;
  rec.energy = 0.5 * (r.dP.squaredNorm() + r.dQ.squaredNorm()) / B;
  return rec;
}

}  // namespace

TrainResult train(const CaseData& data, const AdmittanceMatrix& y, const ArchitectureSpec& arch,
                  const TrainingConfig& config, const TrainHooks& hooks) {
  config.validate();
  const auto d_in = data.input_dim();
  if (arch.d_in != static_cast<int>(d_in) || arch.d_out != static_cast<int>(data.output_dim())) {
    throw ValidationError("architecture dimensions do not match the case");
  }
  const PhysicsContext ctx(data, y);
  const auto& sc = config.sampling;
  const auto B = static_cast<std::size_t>(config.batch_size);

  TrainResult out;
  out.params = init_network(arch, config.seed, pq_voltage_slots(data));
  OptimizerState opt(out.params.size());
  PlateauTracker plateau(config.plateau_factor, config.plateau_patience, config.plateau_rel_eps,
                         config.lr_min / config.lr_init);
  AugmentationBuffer buffer(sc);
  Rng rng(splitmix64(config.seed ^ 0x6e6575726f7066ULL));
  const MatrixXd probe = sobol_batch(d_in, kProbeBatch, 0, sc.delta);

  std::uint64_t sobol_offset = 0;
  MatrixXd pool;
  int pool_epoch = -1;
  const int stage3_start = stage_boundaries(config.epochs, sc)[1];

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Stage stage = Stage::RandomUniform;
    switch (config.schedule) {
      case Schedule::ThreeStage: stage = stage_for_epoch(epoch, config.epochs, sc); break;
      case Schedule::LhsOnly: stage = Stage::LhsRefine; break;
      case Schedule::RandomUniform: stage = Stage::RandomUniform; break;
    }

    MatrixXd U;
    switch (stage) {
      case Stage::SobolExplore:
        U = sobol_batch(d_in, B, sobol_offset, sc.delta);
        sobol_offset += B;
        break;
      case Stage::LhsRefine: U = lhs_batch(d_in, B, sc.delta, rng); break;
      case Stage::RandomUniform: U = uniform_batch(d_in, B, sc.delta, rng); break;
      case Stage::AdaptiveAugment: {
        if (pool_epoch < 0 || (epoch - stage3_start) % sc.adapt_update_period == 0) {
          const auto evaluator = [&](const MatrixXd& pts) {
            return residual_norms(evaluate_batch(out.params, pts, ctx));
          };
          pool = adaptive_lhs_batch(evaluator, d_in, std::max<std::size_t>(8 * B, 2), rng, sc).points;
          pool_epoch = epoch;
        }
        const std::size_t from_buffer = buffer.empty() ? 0 : B / 2;
        U.resize(static_cast<Index>(d_in), static_cast<Index>(B));
        std::uniform_int_distribution<Index> pick(0, pool.cols() - 1);
        for (std::size_t k = 0; k < B - from_buffer; ++k) U.col(static_cast<Index>(k)) = pool.col(pick(rng));
        if (from_buffer > 0) U.rightCols(static_cast<Index>(from_buffer)) = buffer.sample_augmented(from_buffer, rng, sc);
        break;
      }
    }

    LossOptions lo;
    lo.dq_weight = config.dq_weight;
    if (stage == Stage::AdaptiveAugment) {
      lo.smoothing_sd = config.smoothing_sd;
      lo.noise_seed = splitmix64(config.seed + 0x9E37ULL * static_cast<std::uint64_t>(epoch + 1));
    }

    GradientBundle g;
    try {
      g = loss_and_gradient(out.params, U, ctx, lo);
    } catch (const NonFiniteGradient& e) {
      out.aborted = true;
      out.diagnosis = std::string("epoch ") + std::to_string(epoch) + ": " + e.what();
    }
    if (!out.aborted && !std::isfinite(g.loss)) {
      out.aborted = true;
      out.diagnosis = "epoch " + std::to_string(epoch) + ": non-finite loss";
    }
    if (out.aborted) {
      if (hooks.checkpoint) hooks.checkpoint(out.params, epoch);
      return out;
    }
    if (epoch == 0) out.initial_loss = g.loss;
    out.final_loss = g.loss;

    clip_gradients(g.grad, config.clip_max_norm);
    const double lr = cosine_lr(epoch, config.epochs, config.lr_init, config.lr_min) * plateau.scale();
    adamw_step(out.params.values(), g.grad, opt, lr, config.weight_decay);
    ++out.optimizer_steps;

    for (Index k = 0; k < U.cols(); ++k) buffer.push(U.col(k), g.sample_loss[k]);
    plateau.update(g.loss);

    if (epoch % config.log_period == 0 || epoch == config.epochs - 1) {
      TrajectoryRecord rec = probe_record(out.params, probe, ctx);
      rec.epoch = epoch;
      rec.stage = stage;
      rec.loss = g.loss;
      rec.lr = lr;
      rec.buffer_size = buffer.size();
      out.log.records.push_back(rec);
      if (hooks.on_record) hooks.on_record(rec);
    }
    if (hooks.checkpoint && config.checkpoint_period > 0 && (epoch + 1) % config.checkpoint_period == 0 &&
        epoch + 1 < config.epochs) {
      hooks.checkpoint(out.params, epoch);
    }
  }
  if (hooks.checkpoint) hooks.checkpoint(out.params, config.epochs - 1);
  return out;
}

}  // namespace neuropf
