#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace neuropf {

using Rng = std::mt19937_64;

// RandomUniform labels epochs of the i.i.d. uniform baseline schedule.
enum class Stage { SobolExplore, LhsRefine, AdaptiveAugment, RandomUniform };

std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);

struct SamplingConfig {
  double delta = 0.10;  // half-range of every perturbation coordinate, p.u.
  std::array<double, 3> stage_fractions{0.30, 0.40, 0.30};
  int adapt_update_period = 200;
  double top_fraction = 0.25;
  double local_sd = 0.1;
  // false: local noise sd is local_sd * delta; true: local_sd is used as-is.
  bool local_sd_literal = false;
  double aug_sd_factor = 0.15;
  std::size_t buffer_capacity = 4096;
  double buffer_loss_threshold = 5e-3;

  /// Throws ValidationError on violated invariants.
  void validate() const;
  double local_noise_sd() const { return local_sd_literal ? local_sd : local_sd * delta; }
};

/// First epoch of the LHS stage and of the adaptive stage, i.e. ceil(f1 T) and
/// ceil((f1 + f2) T) with products that are integers up to rounding kept exact.
std::array<int, 2> stage_boundaries(int total_epochs, const SamplingConfig& config);

Stage stage_for_epoch(int epoch, int total_epochs, const SamplingConfig& config);

/// Unscrambled Sobol sequence (Joe-Kuo directions, 32-bit). Point 0 is the origin.
class SobolSequence {
 public:
  static constexpr std::size_t kMaxDim = 1111;

  explicit SobolSequence(std::size_t dim);
  std::size_t dim() const { return dim_; }

  /// Point `index` in [0, 1)^dim.
  Eigen::VectorXd point(std::uint64_t index) const;

 private:
  std::size_t dim_;
  std::vector<std::array<std::uint32_t, 32>> v_;
};

/// Points offset..offset+n-1 mapped to [-delta, delta]^dim; one point per column.
Eigen::MatrixXd sobol_batch(std::size_t dim, std::size_t n, std::uint64_t offset, double delta);

/// Latin hypercube: per dimension, one point in each of the n equal strata.
Eigen::MatrixXd lhs_batch(std::size_t dim, std::size_t n, double delta, Rng& rng);

/// i.i.d. uniform on [-delta, delta]^dim.
Eigen::MatrixXd uniform_batch(std::size_t dim, std::size_t n, double delta, Rng& rng);

/// Maps a batch of points (columns) to one residual norm per point.
using ResidualEvaluator = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

/// Indices of the ceil(top_fraction * n) largest scores, largest first; equal
/// scores keep the lower index first.
std::vector<std::size_t> select_centers(const Eigen::VectorXd& scores, double top_fraction);

struct AdaptiveBatch {
  Eigen::MatrixXd points;        // [initial LHS | local points]
  std::size_t n_init = 0;
  Eigen::VectorXd init_scores;   // residual norm of each initial point
  std::vector<std::size_t> centers;
};

/// ceil(n/2) LHS points, scored by `eval`; the remaining points are Gaussian
/// draws around the highest-scoring ones (round-robin), clipped to the box.
AdaptiveBatch adaptive_lhs_batch(const ResidualEvaluator& eval, std::size_t dim, std::size_t n, Rng& rng,
                                 const SamplingConfig& config);

/// Fixed-capacity FIFO of well-fitted perturbations.
class AugmentationBuffer {
 public:
  explicit AugmentationBuffer(std::size_t capacity = 4096, double loss_threshold = 5e-3);
  explicit AugmentationBuffer(const SamplingConfig& config)
      : AugmentationBuffer(config.buffer_capacity, config.buffer_loss_threshold) {}

  /// Inserts `u` iff observed_loss < threshold, evicting the oldest entry when full.
  bool push(const Eigen::VectorXd& u, double observed_loss);

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }
  /// Entry `i` counted from the oldest.
  const Eigen::VectorXd& at(std::size_t i) const { return items_.at(i); }

  /// k draws with replacement, each plus N(0, (aug_sd_factor * delta)^2), clipped.
  Eigen::MatrixXd sample_augmented(std::size_t k, Rng& rng, const SamplingConfig& config) const;

 private:
  std::size_t capacity_;
  double threshold_;
  std::deque<Eigen::VectorXd> items_;
};

}  // namespace neuropf
