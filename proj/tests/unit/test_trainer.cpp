#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "neuropf/admittance.hpp"
#include "neuropf/case_io.hpp"
#include "neuropf/errors.hpp"
#include "neuropf/trainer.hpp"
#include "../oracles.hpp"

using namespace neuropf;
using Eigen::VectorXd;

TEST_CASE("cosine learning rate") {
  CHECK(cosine_lr(0, 10000, 5e-4, 1e-6) == 5e-4);
  CHECK(cosine_lr(10000, 10000, 5e-4, 1e-6) == 1e-6);
  CHECK(cosine_lr(5000, 10000, 5e-4, 1e-6) == doctest::Approx((5e-4 + 1e-6) / 2));
  double prev = 1.0;
  for (int t = 0; t <= 100; ++t) {
    const double lr = cosine_lr(t, 100, 1.0, 0.0);
    CHECK(lr <= prev);
    prev = lr;
  }
}

TEST_CASE("plateau tracker") {
  SUBCASE("halves after patience + 1 stagnant epochs") {
    PlateauTracker p(0.5, 500, 1e-4, 0.0);
    CHECK(p.update(1.0) == 1.0);
    for (int i = 0; i < 500; ++i) CHECK(p.update(1.0) == 1.0);
    CHECK(p.stagnant_epochs() == 500);
    CHECK(p.update(1.0) == 0.5);
    CHECK(p.stagnant_epochs() == 0);
  }
  SUBCASE("two plateaus") {
    PlateauTracker p(0.5, 500, 1e-4, 0.0);
    p.update(1.0);
    for (int i = 0; i < 1002; ++i) p.update(1.0);
    CHECK(p.scale() == 0.25);
  }
  SUBCASE("improvement resets, tiny improvement does not") {
    PlateauTracker p(0.5, 3, 1e-4, 0.0);
    p.update(1.0);
    p.update(1.0);
    p.update(1.0);
    p.update(0.5);
    CHECK(p.stagnant_epochs() == 0);
    p.update(0.5 * (1 - 1e-6));
    CHECK(p.stagnant_epochs() == 1);
  }
  SUBCASE("floor") {
    PlateauTracker p(0.5, 0, 1e-4, 0.3);
    p.update(1.0);
    p.update(1.0);
    p.update(1.0);
    CHECK(p.scale() == 0.3);
  }
}

TEST_CASE("gradient clipping") {
  VectorXd g(2);
  g << 3.0, 4.0;
  CHECK(clip_gradients(g, 1.0) == 5.0);
  CHECK(g.norm() == doctest::Approx(1.0));
  CHECK(g[0] == doctest::Approx(0.6));
  VectorXd s(2);
  s << 0.3, 0.4;
  CHECK(clip_gradients(s, 1.0) == doctest::Approx(0.5));
  CHECK(s[1] == 0.4);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd(0.0, 10.0);
  for (int k = 0; k < 200; ++k) {
    VectorXd r(1000);
    for (auto& v : r) v = nd(rng);
    clip_gradients(r, 1.0);
    CHECK(r.norm() <= 1.0);
  }
  VectorXd z = VectorXd::Zero(3);
  CHECK(clip_gradients(z, 1.0) == 0.0);
  CHECK(z.isZero());
}

TEST_CASE("AdamW by hand") {
  VectorXd p(2);
  p << 1.0, -2.0;
  VectorXd g(2);
  g << 0.5, -0.1;
  OptimizerState st(2);
  adamw_step(p, g, st, 0.1, 0.01);
  // first step: m_hat = g, v_hat = g^2, update = sign(g) up to eps
  CHECK(p[0] == doctest::Approx(1.0 - 0.1 * (0.5 / (0.5 + 1e-8) + 0.01 * 1.0)).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(-2.0 - 0.1 * (-0.1 / (0.1 + 1e-8) + 0.01 * -2.0)).epsilon(1e-14));
  CHECK(st.step == 1);
  const double p0 = p[0];
  adamw_step(p, g, st, 0.1, 0.0);
  const double m = 0.9 * 0.05 + 0.1 * 0.5, v = 0.999 * 0.00025 + 0.001 * 0.25;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  CHECK(p[0] == doctest::Approx(p0 - 0.1 * mh / (std::sqrt(vh) + 1e-8)).epsilon(1e-14));
}

TEST_CASE("configuration") {
  TrainingConfig c;
  apply_setting(c, "epochs", "10");
  apply_setting(c, "sampling.delta", "0.05");
  apply_setting(c, "sampling.stage_fractions", "0.2,0.5,0.3");
  apply_setting(c, "schedule", "lhs_only");
  apply_setting(c, "arch.layers", "6");
  CHECK(c.epochs == 10);
  CHECK(c.sampling.delta == 0.05);
  CHECK(c.sampling.stage_fractions[1] == 0.5);
  CHECK(c.schedule == Schedule::LhsOnly);
  CHECK(c.arch.layers == 6);
  CHECK_THROWS_AS(apply_setting(c, "nonsense", "1"), ValidationError);
  CHECK_THROWS_AS(apply_setting(c, "epochs", "ten"), ValidationError);
  TrainingConfig bad;
  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = {};
  bad.lr_min = 1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);

  CHECK(config_digest(c) == config_digest(c));
  CHECK(config_digest(c) != config_digest(TrainingConfig{}));
  CHECK(config_digest(TrainingConfig{}).size() == 16);

  const auto dir = std::filesystem::temp_directory_path() / "neuropf_cfg_test";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "c.json") << config_to_json(c);
  CHECK(config_digest(load_training_config(dir / "c.json")) == config_digest(c));
  std::ofstream(dir / "n.json") << R"({"epochs": 7, "sampling": {"delta": 0.02}})";
  const TrainingConfig n = load_training_config(dir / "n.json");
  CHECK(n.epochs == 7);
  CHECK(n.sampling.delta == 0.02);
  std::ofstream(dir / "bad.json") << R"({"epochs": )";
  CHECK_THROWS_AS(load_training_config(dir / "bad.json"), ParseError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("trajectory log round trip") {
  TrajectoryLog log;
  log.records.push_back({0, Stage::SobolExplore, 1.0 / 3.0, 5e-4, 0.1, 0.2, 0.3, 0});
  log.records.push_back({1, Stage::AdaptiveAugment, 2e-300, 1e-6, 1e-9, 2e-9, 3e-9, 17});
  std::stringstream ss;
  write_trajectory_log(ss, log, "0123456789abcdef");
  const std::string text = ss.str();
  CHECK(text.rfind("# neuropf ", 0) == 0);
  CHECK(text.find("config_digest=0123456789abcdef") != std::string::npos);
  CHECK(text.find(kTrajectoryLogHeader) != std::string::npos);
  const TrajectoryLog back = read_trajectory_log(ss);
  CHECK(back.records == log.records);
  std::stringstream bad("epoch,stage\n1,x\n");
  CHECK_THROWS_AS(read_trajectory_log(bad), ParseError);
}

TEST_CASE("short training runs") {
  const CaseData d = load_case(oracle::data_path("case14.m"));
  const AdmittanceMatrix y = build_ybus(d);
  const auto arch = auto_config(d);
  SUBCASE("one epoch is one step") {
    TrainingConfig c;
    c.epochs = 1;
    const TrainResult r = train(d, y, arch, c);
    CHECK(r.optimizer_steps == 1);
    CHECK(r.log.records.size() == 1);
    CHECK_FALSE(r.aborted);
  }
  SUBCASE("stages appear in order with the right boundaries") {
    TrainingConfig c;
    c.epochs = 10;
    c.sampling.adapt_update_period = 2;
    c.sampling.buffer_loss_threshold = 1e9;  // fill the buffer
    int ckpts = 0;
    TrainHooks hooks;
    hooks.checkpoint = [&](const NetworkParams&, int) { ++ckpts; };
    const TrainResult r = train(d, y, arch, c, hooks);
    REQUIRE(r.log.records.size() == 10);
    for (const auto& rec : r.log.records) {
      const Stage want = rec.epoch < 3 ? Stage::SobolExplore : rec.epoch < 7 ? Stage::LhsRefine : Stage::AdaptiveAugment;
      CHECK(rec.stage == want);
      CHECK(std::isfinite(rec.loss));
    }
    CHECK(r.log.records.back().buffer_size > 0);
    CHECK(r.log.records.front().lr == c.lr_init);
    CHECK(ckpts == 1);
  }
  SUBCASE("baseline schedules") {
    TrainingConfig c;
    c.epochs = 4;
    c.schedule = Schedule::RandomUniform;
    for (const auto& rec : train(d, y, arch, c).log.records) CHECK(rec.stage == Stage::RandomUniform);
    c.schedule = Schedule::LhsOnly;
    for (const auto& rec : train(d, y, arch, c).log.records) CHECK(rec.stage == Stage::LhsRefine);
  }
  SUBCASE("reproducible and seed-dependent") {
    TrainingConfig c;
    c.epochs = 12;
    c.log_period = 5;
    const TrainResult a = train(d, y, arch, c);
    const TrainResult b = train(d, y, arch, c);
    CHECK(a.log.records == b.log.records);
    CHECK(a.params.values() == b.params.values());
    CHECK(a.log.records.size() == 4);  // epochs 0, 5, 10 and the last
    c.seed = 1;
    CHECK(train(d, y, arch, c).log.records.back().loss != a.log.records.back().loss);
  }
}
