#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "neuropf/admittance.hpp"
#include "neuropf/case_io.hpp"
#include "neuropf/network.hpp"
#include "neuropf/sampling.hpp"

namespace neuropf {

enum class Schedule { ThreeStage, LhsOnly, RandomUniform };

std::string_view to_string(Schedule s);
Schedule schedule_from_string(std::string_view s);

struct TrainingConfig {
  int epochs = 2000;
  int batch_size = 64;
  double lr_init = 5e-4;
  double weight_decay = 1e-4;
  double lr_min = 1e-6;
  double plateau_factor = 0.5;
  int plateau_patience = 500;
  double plateau_rel_eps = 1e-4;
  double clip_max_norm = 1.0;
  double smoothing_sd = 5e-4;  // used in the adaptive stage only
  double dq_weight = 1.0;
  SamplingConfig sampling;
  std::uint64_t seed = 0;
  int log_period = 1;
  Schedule schedule = Schedule::ThreeStage;
  int checkpoint_period = 0;  // 0: only at exit
  ArchitectureOverrides arch;

  void validate() const;
};

/// Sets one field from its dotted key ("epochs", "sampling.delta", "arch.layers").
/// Throws ValidationError on unknown keys or unparsable values.
void apply_setting(TrainingConfig& config, std::string_view key, std::string_view value);

/// Reads a JSON object whose (possibly nested) keys mirror TrainingConfig.
TrainingConfig load_training_config(const std::filesystem::path& path);

/// Canonical JSON text of a config; the basis of config_digest().
std::string config_to_json(const TrainingConfig& config);

/// 16-hex-digit FNV-1a hash of config_to_json().
std::string config_digest(const TrainingConfig& config);

double cosine_lr(double t, double t_max, double lr_max, double lr_min);

/// Reduce-on-plateau multiplier.
class PlateauTracker {
 public:
  PlateauTracker(double factor, int patience, double rel_eps, double min_scale);

  /// Feeds one loss value and returns the multiplier to use from now on.
  double update(double loss);
  double scale() const { return scale_; }
  int stagnant_epochs() const { return counter_; }

 private:
  double factor_;
  int patience_;
  double rel_eps_;
  double min_scale_;
  double best_;
  int counter_ = 0;
  double scale_ = 1.0;
};

/// Rescales `grad` to global L2 norm max_norm when larger. Returns the norm before clipping.
double clip_gradients(Eigen::VectorXd& grad, double max_norm);

struct OptimizerState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit OptimizerState(Eigen::Index size = 0) : m(Eigen::VectorXd::Zero(size)), v(Eigen::VectorXd::Zero(size)) {}
};

/// One AdamW update with decoupled weight decay.
void adamw_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, OptimizerState& state, double lr,
                double weight_decay);

struct TrajectoryRecord {
  int epoch = 0;
  Stage stage = Stage::SobolExplore;
  double loss = 0.0;
  double lr = 0.0;
  double mean_dP = 0.0;  // mean |dP| over the probe batch
  double mean_dQ = 0.0;  // mean |dQ| over the probe batch
  double energy = 0.0;   // mean 0.5 ||F||^2 over the probe batch
  std::size_t buffer_size = 0;

  bool operator==(const TrajectoryRecord&) const = default;
};

struct TrajectoryLog {
  std::vector<TrajectoryRecord> records;
};

inline constexpr const char* kTrajectoryLogHeader = "epoch,stage,loss,lr,mean_dP,mean_dQ,energy,buffer_size";

/// CSV writer/reader for the trajectory log. The writer emits a leading
/// `# neuropf <version> config_digest=<digest>` comment line.
void write_trajectory_log(std::ostream& os, const TrajectoryLog& log, const std::string& digest);
TrajectoryLog read_trajectory_log(std::istream& is);

struct TrainResult {
  NetworkParams params;
  TrajectoryLog log;
  std::int64_t optimizer_steps = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  bool aborted = false;
  std::string diagnosis;
};

struct TrainHooks {
  /// Called every checkpoint_period epochs (when > 0), at exit and on abort
  /// (with the last finite parameters).
  std::function<void(const NetworkParams&, int epoch)> checkpoint;
  /// Called with every new log record.
  std::function<void(const TrajectoryRecord&)> on_record;
};

/// Number of probe points used for the logged energy and mean residuals.
inline constexpr std::size_t kProbeBatch = 64;

TrainResult train(const CaseData& data, const AdmittanceMatrix& y, const ArchitectureSpec& arch,
                  const TrainingConfig& config, const TrainHooks& hooks = {});

}  // namespace neuropf
