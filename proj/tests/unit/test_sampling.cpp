#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "neuropf/errors.hpp"
#include "neuropf/sampling.hpp"
#include "../sobol_golden.hpp"

using namespace neuropf;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Max |F_n(box) - vol| over anchored boxes with corners on a coarse grid.
double grid_discrepancy(const MatrixXd& P, int grid) {
  double worst = 0.0;
  const auto n = static_cast<double>(P.cols());
  for (int a = 1; a <= grid; ++a) {
    for (int b = 1; b <= grid; ++b) {
      const double x = static_cast<double>(a) / grid, yv = static_cast<double>(b) / grid;
      int inside = 0;
      for (Eigen::Index k = 0; k < P.cols(); ++k) inside += P(0, k) < x && P(1, k) < yv;
      worst = std::max(worst, std::abs(inside / n - x * yv));
    }
  }
  return worst;
}

bool stratified(const MatrixXd& X, double delta) {
  const auto n = X.cols();
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    std::vector<int> count(static_cast<std::size_t>(n), 0);
    for (Eigen::Index k = 0; k < n; ++k) {
      const double t = (X(r, k) + delta) / (2 * delta) * static_cast<double>(n);
      const auto s = std::min<Eigen::Index>(static_cast<Eigen::Index>(std::floor(t)), n - 1);
      ++count[static_cast<std::size_t>(s)];
    }
    if (std::any_of(count.begin(), count.end(), [](int c) { return c != 1; })) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("Sobol sequence against reference points") {
  const SobolSequence s(22);
  for (std::size_t i = 0; i < 16; ++i) {
    const VectorXd p = s.point(i);
    for (std::size_t j = 0; j < 22; ++j) CHECK(p[static_cast<Eigen::Index>(j)] * 4294967296.0 == golden::kSobol22[i][j]);
  }
  const SobolSequence w(SobolSequence::kMaxDim);
  for (int r = 0; r < 2; ++r) {
    const VectorXd p = w.point(1000 + static_cast<std::uint64_t>(r));
    for (std::size_t c = 0; c < golden::kSobolWideCols.size(); ++c) {
      CHECK(p[static_cast<Eigen::Index>(golden::kSobolWideCols[c])] * 4294967296.0 == golden::kSobolWide[r][c]);
    }
  }
  CHECK_THROWS_AS(SobolSequence(0), ValidationError);
  CHECK_THROWS_AS(SobolSequence(SobolSequence::kMaxDim + 1), ValidationError);
}

TEST_CASE("Sobol batches") {
  const MatrixXd a = sobol_batch(22, 16, 0, 0.1);
  CHECK(a.rows() == 22);
  CHECK(a.cols() == 16);
  CHECK(a.col(0).isConstant(-0.1));
  CHECK(a.cwiseAbs().maxCoeff() <= 0.1);
  CHECK(sobol_batch(22, 16, 0, 0.1) == a);
  CHECK(sobol_batch(22, 8, 8, 0.1) == a.rightCols(8));
  CHECK(sobol_batch(5, 10, 3, 0.0).isZero());
  SUBCASE("more uniform than i.i.d. draws") {
    const MatrixXd s = (sobol_batch(2, 256, 0, 0.5).array() + 0.5).matrix();
    Rng rng(3);
    const MatrixXd u = (uniform_batch(2, 256, 0.5, rng).array() + 0.5).matrix();
    CHECK(grid_discrepancy(s, 16) < grid_discrepancy(u, 16));
  }
}

TEST_CASE("Latin hypercube") {
  Rng rng(11);
  for (auto [dim, n] : {std::pair<std::size_t, std::size_t>{22, 64}, {67, 128}}) {
    for (int rep = 0; rep < 5; ++rep) {
      const MatrixXd X = lhs_batch(dim, n, 0.1, rng);
      CHECK(static_cast<std::size_t>(X.rows()) == dim);
      CHECK(stratified(X, 0.1));
    }
  }
  Rng r1(4), r2(4);
  CHECK(lhs_batch(3, 9, 0.2, r1) == lhs_batch(3, 9, 0.2, r2));
  CHECK(lhs_batch(3, 1, 0.2, r1).cwiseAbs().maxCoeff() <= 0.2);
}

TEST_CASE("center selection") {
  SUBCASE("sort oracle") {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> pick_n(1, 80), pick_v(0, 6);
    for (int rep = 0; rep < 100; ++rep) {
      const int n = pick_n(rng);
      VectorXd s(n);
      for (auto& v : s) v = pick_v(rng) * 0.25;  // many ties
      std::vector<std::size_t> idx(static_cast<std::size_t>(n));
      std::iota(idx.begin(), idx.end(), 0);
      std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const double sa = s[static_cast<Eigen::Index>(a)], sb = s[static_cast<Eigen::Index>(b)];
        return sa != sb ? sa > sb : a < b;
      });
      idx.resize(static_cast<std::size_t>(std::ceil(0.25 * n)));
      CHECK(select_centers(s, 0.25) == idx);
    }
  }
  SUBCASE("examples") {
    CHECK(select_centers((VectorXd(4) << 1, 5, 3, 2).finished(), 0.5) == std::vector<std::size_t>{1, 2});
    CHECK(select_centers((VectorXd(3) << 1, 1, 1).finished(), 0.25) == std::vector<std::size_t>{0});
  }
}

TEST_CASE("adaptive LHS") {
  SamplingConfig cfg;
  SUBCASE("centers are the worst initial points") {
    const ResidualEvaluator eval = [](const MatrixXd& X) { return VectorXd(X.colwise().squaredNorm().transpose()); };
    Rng rng(7);
    const AdaptiveBatch b = adaptive_lhs_batch(eval, 22, 64, rng, cfg);
    CHECK(b.points.cols() == 64);
    CHECK(b.n_init == 32);
    CHECK(stratified(b.points.leftCols(32), cfg.delta));
    CHECK(b.centers == select_centers(b.init_scores, cfg.top_fraction));
    CHECK(b.centers.size() == 8);
    CHECK(b.points.cwiseAbs().maxCoeff() <= cfg.delta);
    // with sd 0 every local point sits on a center
    cfg.local_sd = 0.0;
    Rng r2(7);
    const AdaptiveBatch z = adaptive_lhs_batch(eval, 22, 64, r2, cfg);
    for (Eigen::Index k = 32; k < 64; ++k) {
      const auto c = z.centers[static_cast<std::size_t>(k - 32) % z.centers.size()];
      CHECK(z.points.col(k) == z.points.col(static_cast<Eigen::Index>(c)));
    }
  }
  SUBCASE("constant evaluator picks the first points") {
    const ResidualEvaluator eval = [](const MatrixXd& X) { return VectorXd::Ones(X.cols()); };
    Rng rng(1);
    const AdaptiveBatch b = adaptive_lhs_batch(eval, 4, 9, rng, cfg);
    CHECK(b.n_init == 5);
    CHECK(b.centers == std::vector<std::size_t>{0, 1});
  }
  SUBCASE("too small") {
    Rng rng(1);
    const ResidualEvaluator eval = [](const MatrixXd& X) { return VectorXd::Ones(X.cols()); };
    CHECK_THROWS_AS(adaptive_lhs_batch(eval, 4, 1, rng, cfg), ValidationError);
  }
}

TEST_CASE("augmentation buffer") {
  SamplingConfig cfg;
  AugmentationBuffer buf(cfg);
  CHECK(buf.capacity() == 4096);
  const VectorXd u = VectorXd::Constant(3, 0.05);
  CHECK_FALSE(buf.push(u, 5e-3));
  CHECK(buf.push(u, std::nextafter(5e-3, 0.0)));
  CHECK(buf.size() == 1);

  AugmentationBuffer small(3, 1.0);
  for (int i = 0; i < 5; ++i) small.push(VectorXd::Constant(1, 0.01 * i), 0.0);
  CHECK(small.size() == 3);
  CHECK(small.at(0)[0] == 0.02);
  CHECK(small.at(2)[0] == 0.04);

  AugmentationBuffer big(cfg);
  for (int i = 0; i < 5000; ++i) big.push(VectorXd::Constant(1, i), 0.0);
  CHECK(big.size() == 4096);
  CHECK(big.at(0)[0] == 904.0);

  SUBCASE("sampling") {
    Rng rng(3);
    cfg.aug_sd_factor = 0.0;
    const MatrixXd s = small.sample_augmented(50, rng, cfg);
    CHECK(s.cols() == 50);
    for (Eigen::Index k = 0; k < 50; ++k) CHECK((s(0, k) == 0.02 || s(0, k) == 0.03 || s(0, k) == 0.04));
    cfg.aug_sd_factor = 0.15;
    AugmentationBuffer one(4, 1.0);
    one.push(VectorXd::Constant(2, 0.099), 0.0);
    const MatrixXd t = one.sample_augmented(200, rng, cfg);
    CHECK(t.cwiseAbs().maxCoeff() <= cfg.delta);
    CHECK((t.array() != 0.099).any());
    AugmentationBuffer empty(4, 1.0);
    CHECK_THROWS_AS(empty.sample_augmented(1, rng, cfg), ValidationError);
  }
}

TEST_CASE("stage boundaries") {
  SamplingConfig cfg;
  CHECK(stage_boundaries(10000, cfg) == std::array<int, 2>{3000, 7000});
  CHECK(stage_boundaries(2000, cfg) == std::array<int, 2>{600, 1400});
  CHECK(stage_boundaries(10, cfg) == std::array<int, 2>{3, 7});
  CHECK(stage_boundaries(1, cfg) == std::array<int, 2>{1, 1});
  CHECK(stage_for_epoch(2999, 10000, cfg) == Stage::SobolExplore);
  CHECK(stage_for_epoch(3000, 10000, cfg) == Stage::LhsRefine);
  CHECK(stage_for_epoch(6999, 10000, cfg) == Stage::LhsRefine);
  CHECK(stage_for_epoch(7000, 10000, cfg) == Stage::AdaptiveAugment);
  CHECK(stage_for_epoch(0, 1, cfg) == Stage::SobolExplore);
  for (Stage s : {Stage::SobolExplore, Stage::LhsRefine, Stage::AdaptiveAugment, Stage::RandomUniform}) {
    CHECK(stage_from_string(to_string(s)) == s);
  }
  CHECK_THROWS_AS(stage_from_string("warmup"), ParseError);
  cfg.stage_fractions = {0.5, 0.5, 0.5};
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}
