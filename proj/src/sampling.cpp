#include "neuropf/sampling.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "neuropf/errors.hpp"
#include "neuropf/sobol_directions.hpp"

namespace neuropf {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::SobolExplore: return "sobol_explore";
    case Stage::LhsRefine: return "lhs_refine";
    case Stage::AdaptiveAugment: return "adaptive_augment";
    case Stage::RandomUniform: return "random_uniform";
  }
  return "unknown";
}

Stage stage_from_string(std::string_view s) {
  for (Stage st : {Stage::SobolExplore, Stage::LhsRefine, Stage::AdaptiveAugment, Stage::RandomUniform}) {
    if (to_string(st) == s) return st;
  }
  throw ParseError("unknown stage label '" + std::string(s) + "'");
}

void SamplingConfig::validate() const {
  if (!(delta >= 0.0) || !std::isfinite(delta)) throw ValidationError("sampling.delta must be finite and >= 0");
  for (double f : stage_fractions) {
    if (!(f >= 0.0)) throw ValidationError("sampling stage fractions must be >= 0");
  }
  const double sum = stage_fractions[0] + stage_fractions[1] + stage_fractions[2];
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("sampling stage fractions must sum to 1");
  if (!(top_fraction > 0.0 && top_fraction < 1.0)) throw ValidationError("sampling.top_fraction must be in (0, 1)");
  if (adapt_update_period < 1) throw ValidationError("sampling.adapt_update_period must be >= 1");
  if (buffer_capacity < 1) throw ValidationError("sampling.buffer_capacity must be >= 1");
  if (!(local_sd >= 0.0) || !(aug_sd_factor >= 0.0)) throw ValidationError("sampling noise scales must be >= 0");
}

namespace {

int ceil_product(double fraction, int total) {
  const double x = fraction * static_cast<double>(total);
  const double r = std::round(x);
  if (std::abs(x - r) <= 1e-9 * std::max(1.0, std::abs(x))) return static_cast<int>(r);
  return static_cast<int>(std::ceil(x));
}

}  // namespace

std::array<int, 2> stage_boundaries(int total_epochs, const SamplingConfig& config) {
  const auto& f = config.stage_fractions;
  return {ceil_product(f[0], total_epochs), ceil_product(f[0] + f[1], total_epochs)};
}

Stage stage_for_epoch(int epoch, int total_epochs, const SamplingConfig& config) {
  const auto b = stage_boundaries(total_epochs, config);
  if (epoch < b[0]) return Stage::SobolExplore;
  if (epoch < b[1]) return Stage::LhsRefine;
  return Stage::AdaptiveAugment;
}

SobolSequence::SobolSequence(std::size_t dim) : dim_(dim), v_(dim) {
  if (dim == 0 || dim > kMaxDim) {
    throw ValidationError("Sobol dimension " + std::to_string(dim) + " outside [1, " + std::to_string(kMaxDim) + "]");
  }
  for (std::size_t d = 0; d < dim; ++d) {
    std::array<std::uint32_t, 32> m{};
    if (d == 0) {
      m.fill(1);
    } else {
      const auto& entry = detail::kSobolTable[d];
      const std::uint32_t p = entry.poly;
      const int deg = std::bit_width(p) - 1;
      for (int i = 0; i < deg; ++i) m[i] = entry.m[i];
      for (int i = deg; i < 32; ++i) {
        std::uint32_t nv = m[i - deg];
        for (int k = 0; k < deg; ++k) {
          if ((p >> (deg - 1 - k)) & 1u) nv ^= m[i - k - 1] << (k + 1);
        }
        m[i] = nv;
      }
    }
    for (int i = 0; i < 32; ++i) v_[d][i] = m[i] << (31 - i);
  }
}

VectorXd SobolSequence::point(std::uint64_t index) const {
  if (index >> 32) throw ValidationError("Sobol index exceeds 2^32");
  const std::uint64_t gray = index ^ (index >> 1);
  VectorXd x(static_cast<Index>(dim_));
  for (std::size_t d = 0; d < dim_; ++d) {
    std::uint32_t acc = 0;
    for (int b = 0; b < 32; ++b) {
      if ((gray >> b) & 1u) acc ^= v_[d][b];
    }
    x[static_cast<Index>(d)] = std::ldexp(static_cast<double>(acc), -32);
  }
  return x;
}

MatrixXd sobol_batch(std::size_t dim, std::size_t n, std::uint64_t offset, double delta) {
  const SobolSequence seq(dim);
  MatrixXd out(static_cast<Index>(dim), static_cast<Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    out.col(static_cast<Index>(k)) = (-delta + 2.0 * delta * seq.point(offset + k).array()).matrix();
  }
  return out;
}

MatrixXd lhs_batch(std::size_t dim, std::size_t n, double delta, Rng& rng) {
  MatrixXd out(static_cast<Index>(dim), static_cast<Index>(n));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::size_t> perm(n);
  const double inv_n = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t k = 0; k < n; ++k) {
      const double x = (static_cast<double>(perm[k]) + unif(rng)) * inv_n;
      out(static_cast<Index>(d), static_cast<Index>(k)) = -delta + 2.0 * delta * x;
    }
  }
  return out;
}

MatrixXd uniform_batch(std::size_t dim, std::size_t n, double delta, Rng& rng) {
  std::uniform_real_distribution<double> unif(-delta, delta);
  MatrixXd out(static_cast<Index>(dim), static_cast<Index>(n));
  for (Index c = 0; c < out.cols(); ++c) {
    for (Index r = 0; r < out.rows(); ++r) out(r, c) = delta > 0.0 ? unif(rng) : 0.0;
  }
  return out;
}

std::vector<std::size_t> select_centers(const VectorXd& scores, double top_fraction) {
  const auto n = static_cast<std::size_t>(scores.size());
  const auto k = std::min(n, static_cast<std::size_t>(std::ceil(top_fraction * static_cast<double>(n))));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[static_cast<Index>(a)] > scores[static_cast<Index>(b)];
  });
  idx.resize(k);
  return idx;
}

AdaptiveBatch adaptive_lhs_batch(const ResidualEvaluator& eval, std::size_t dim, std::size_t n, Rng& rng,
                                 const SamplingConfig& config) {
  if (n < 2) throw ValidationError("adaptive_lhs_batch needs n >= 2");
  AdaptiveBatch out;
  out.n_init = (n + 1) / 2;
  const MatrixXd init = lhs_batch(dim, out.n_init, config.delta, rng);
  out.init_scores = eval(init);
  if (out.init_scores.size() != static_cast<Index>(out.n_init)) {
    throw ValidationError("residual evaluator returned wrong number of scores");
  }
  out.centers = select_centers(out.init_scores, config.top_fraction);

  out.points.resize(static_cast<Index>(dim), static_cast<Index>(n));
  out.points.leftCols(static_cast<Index>(out.n_init)) = init;
  std::normal_distribution<double> noise(0.0, 1.0);
  const double sd = config.local_noise_sd();
  for (std::size_t k = out.n_init; k < n; ++k) {
    const auto center = static_cast<Index>(out.centers[(k - out.n_init) % out.centers.size()]);
    for (Index r = 0; r < static_cast<Index>(dim); ++r) {
      const double x = init(r, center) + sd * noise(rng);
      out.points(r, static_cast<Index>(k)) = std::clamp(x, -config.delta, config.delta);
    }
  }
  return out;
}

AugmentationBuffer::AugmentationBuffer(std::size_t capacity, double loss_threshold)
    : capacity_(capacity), threshold_(loss_threshold) {
  if (capacity < 1) throw ValidationError("augmentation buffer capacity must be >= 1");
}

bool AugmentationBuffer::push(const VectorXd& u, double observed_loss) {
  if (!(observed_loss < threshold_)) return false;
  if (items_.size() == capacity_) items_.pop_front();
  items_.push_back(u);
  return true;
}

MatrixXd AugmentationBuffer::sample_augmented(std::size_t k, Rng& rng, const SamplingConfig& config) const {
  if (items_.empty()) throw ValidationError("augmentation buffer is empty");
  const Index dim = items_.front().size();
  const double sd = config.aug_sd_factor * config.delta;
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::normal_distribution<double> noise(0.0, 1.0);
  MatrixXd out(dim, static_cast<Index>(k));
  for (std::size_t j = 0; j < k; ++j) {
    const VectorXd& base = items_[pick(rng)];
    for (Index r = 0; r < dim; ++r) {
      const double x = sd > 0.0 ? base[r] + sd * noise(rng) : base[r];
      out(r, static_cast<Index>(j)) = std::clamp(x, -config.delta, config.delta);
    }
  }
  return out;
}

}  // namespace neuropf
