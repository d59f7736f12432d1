#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "neuropf/admittance.hpp"
#include "neuropf/case_io.hpp"
#include "neuropf/network.hpp"
#include "neuropf/newton.hpp"
#include "neuropf/trainer.hpp"

namespace neuropf {

/// Anything that maps a perturbation to a full power-flow state.
class StateModel {
 public:
  virtual ~StateModel() = default;
  virtual StateVector predict(const PerturbationVector& u) const = 0;
  /// Batched prediction, U is d_in x k; fills n x k matrices.
  virtual void predict_batch(const Eigen::MatrixXd& U, Eigen::MatrixXd& V, Eigen::MatrixXd& theta) const;
};

class NeuralModel : public StateModel {
 public:
  NeuralModel(const NetworkParams& params, const CaseData& data) : params_(params), data_(data) {}
  StateVector predict(const PerturbationVector& u) const override;
  void predict_batch(const Eigen::MatrixXd& U, Eigen::MatrixXd& V, Eigen::MatrixXd& theta) const override;

 private:
  const NetworkParams& params_;
  const CaseData& data_;
};

/// Answers every query with a Newton solve; the zero-error reference model.
class NewtonOracleModel : public StateModel {
 public:
  NewtonOracleModel(const CaseData& data, const AdmittanceMatrix& y, NewtonOptions opts = {});
  StateVector predict(const PerturbationVector& u) const override;

 private:
  const CaseData& data_;
  const AdmittanceMatrix& y_;
  PowerInjection base_;
  NewtonOptions opts_;
};

struct EvalReport {
  std::string case_name;
  std::vector<int> bus_ids;
  double residual_norm = 0.0;  // of the model state
  bool newton_converged = false;
  int newton_iterations = 0;
  double newton_time_s = 0.0;
  double nn_inference_time_s = 0.0;  // median of repeated predictions
  double dV_max = 0.0;
  double dV_mean = 0.0;
  double dtheta_max_deg = 0.0;  // slack-aligned, wrapped to (-180, 180]
  double dtheta_mean_deg = 0.0;
  Eigen::VectorXd V_nn, V_newton;
  Eigen::VectorXd theta_nn_deg, theta_newton_deg;
};

/// Wraps an angle in degrees to (-180, 180].
double wrap_degrees(double deg);

/// Compares the model with a flat-start Newton solve for base injections + u.
/// Difference metrics are left at zero when Newton fails.
EvalReport evaluate(const StateModel& model, const CaseData& data, const AdmittanceMatrix& y,
                    const PerturbationVector& u, int timing_repeats = 100);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

struct BenchmarkResult {
  std::size_t k = 0;
  double nn_time_s = 0.0;       // one batched prediction over all scenarios
  double newton_time_s = 0.0;   // k sequential flat-start solves
  double speedup = 0.0;         // newton / nn, 0 when undefined
  std::size_t newton_failures = 0;
};

BenchmarkResult batch_benchmark(const StateModel& model, const CaseData& data, const AdmittanceMatrix& y,
                                const Eigen::MatrixXd& scenarios);

struct AblationRow {
  Schedule strategy = Schedule::ThreeStage;
  std::uint64_t seed = 0;
  double final_train_loss = 0.0;
  double heldout_loss = 0.0;        // noise-free loss on a shared uniform evaluation batch
  double residual_norm_u0 = 0.0;
};

struct AblationSummary {
  Schedule strategy = Schedule::ThreeStage;
  double median_heldout_loss = 0.0;
  double median_final_train_loss = 0.0;
  double median_residual_norm_u0 = 0.0;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  std::vector<AblationSummary> summary;
};

/// Points in the shared held-out set used by ablation_sampling.
inline constexpr std::size_t kHeldoutBatch = 256;

/// Trains once per (strategy, seed) with `config` (schedule and seed replaced).
AblationTable ablation_sampling(const CaseData& data, const AdmittanceMatrix& y, const ArchitectureSpec& arch,
                                const TrainingConfig& config, const std::vector<std::uint64_t>& seeds,
                                const std::vector<Schedule>& strategies = {Schedule::RandomUniform,
                                                                           Schedule::ThreeStage});

void write_ablation_csv(std::ostream& os, const AblationTable& table);

struct FigureRow {
  int epoch = 0;
  Stage stage = Stage::SobolExplore;
  double mean_dP = 0.0, mean_dQ = 0.0, energy = 0.0, loss = 0.0, lr = 0.0;
  bool operator==(const FigureRow&) const = default;
};

struct ComparisonRow {
  int bus = 0;
  double V_nn = 0.0, V_newton = 0.0, theta_nn_deg = 0.0, theta_newton_deg = 0.0;
  bool operator==(const ComparisonRow&) const = default;
};

inline constexpr const char* kFigureTrajectoryHeader = "epoch,stage,mean_dP,mean_dQ,energy,loss,lr";
inline constexpr const char* kComparisonHeader = "bus,V_nn,V_newton,theta_nn_deg,theta_newton_deg";

/// Writes trajectory.csv, comparison.csv and meta.json into out_dir. Returns the written paths.
std::vector<std::filesystem::path> export_figure_data(const TrajectoryLog& log, const EvalReport& report,
                                                      const std::string& digest,
                                                      const std::filesystem::path& out_dir);

std::vector<FigureRow> read_figure_trajectory(std::istream& is);
std::vector<ComparisonRow> read_comparison(std::istream& is);
void write_comparison_csv(std::ostream& os, const EvalReport& report, const std::string& digest);

}  // namespace neuropf
