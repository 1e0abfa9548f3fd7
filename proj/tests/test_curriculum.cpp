#include <cmath>

#include "doctest.h"
#include "freqvit/curriculum.hpp"

using namespace freqvit;
using namespace freqvit::curriculum;

namespace {

CurriculumConfig toy_cfg() {
    CurriculumConfig cfg;
    cfg.total_epochs = 200;
    cfg.stage1_fraction = 0.75;
    cfg.warmup_epochs = 5;
    cfg.batch_size = 64;
    cfg.lr_ref = 1e-3;
    cfg.lr_ref_batch = 64;
    cfg.min_lr = 0.0;
    return cfg;
}

}  // namespace

TEST_CASE("stage boundary splits 200 epochs into 150 + 50") {
    const CurriculumConfig cfg = toy_cfg();
    CHECK(stage_boundary(cfg) == 150);
    CHECK(plan_for_epoch(cfg, 0).stage == Stage::kLowFreq);
    CHECK(plan_for_epoch(cfg, 149).stage == Stage::kLowFreq);
    CHECK(plan_for_epoch(cfg, 150).stage == Stage::kFullRes);
    CHECK(plan_for_epoch(cfg, 199).stage == Stage::kFullRes);
    CHECK_THROWS_AS(plan_for_epoch(cfg, 200), std::out_of_range);
    CHECK_THROWS_AS(plan_for_epoch(cfg, -1), std::out_of_range);
}

TEST_CASE("boundary epoch switches resolution and enables patching") {
    const CurriculumConfig cfg = toy_cfg();
    const StagePlan before = plan_for_epoch(cfg, 149);
    CHECK(before.global_res == 112);
    CHECK(before.local_res == 48);
    CHECK(!before.gp_active);
    const StagePlan after = plan_for_epoch(cfg, 150);
    CHECK(after.global_res == 224);
    CHECK(after.local_res == 96);
    CHECK(after.gp_active);
}

TEST_CASE("degenerate one-epoch schedule lands entirely in stage 2") {
    CurriculumConfig cfg = toy_cfg();
    cfg.total_epochs = 1;
    CHECK(stage_boundary(cfg) == 0);
    CHECK(plan_for_epoch(cfg, 0).stage == Stage::kFullRes);
}

TEST_CASE("gp_active never fires when disabled") {
    CurriculumConfig cfg = toy_cfg();
    cfg.gp_enabled_stage2 = false;
    CHECK(!plan_for_epoch(cfg, 199).gp_active);
}

TEST_CASE("batch size constant across plans unless explicitly overridden") {
    CurriculumConfig cfg = toy_cfg();
    for (int e = 0; e < cfg.total_epochs; ++e)
        CHECK(plan_for_epoch(cfg, e).batch_size == cfg.batch_size);

    cfg.allow_batch_size_override = true;
    cfg.stage1_batch_size = 96;
    CHECK(plan_for_epoch(cfg, 0).batch_size == 96);
    CHECK(plan_for_epoch(cfg, 150).batch_size == 64);

    CurriculumConfig bad = toy_cfg();
    bad.stage1_batch_size = 96;  // differs without the override flag
    CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("base_lr rules") {
    CurriculumConfig cfg = toy_cfg();
    cfg.lr_ref = 2e-3;
    cfg.lr_ref_batch = 100;

    cfg.batch_size = 100;
    CHECK(base_lr(cfg) == doctest::Approx(2e-3));  // identity point

    cfg.batch_size = 400;
    cfg.lr_rule = LrRule::kSqrt;
    CHECK(base_lr(cfg) == doctest::Approx(4e-3));
    cfg.lr_rule = LrRule::kLinear;
    CHECK(base_lr(cfg) == doctest::Approx(8e-3));
    cfg.lr_rule = LrRule::kFixed;
    CHECK(base_lr(cfg) == doctest::Approx(2e-3));

    cfg.batch_size = 0;
    CHECK_THROWS_AS(base_lr(cfg), std::invalid_argument);
}

TEST_CASE("published LR anchors are stored as presets") {
    const LrPreset in1k = lr_preset("vitb16_in1k");
    CHECK(in1k.batch == 512);
    CHECK(in1k.lr == doctest::Approx(7.9e-4));
    const LrPreset in100 = lr_preset("vits16_in100");
    CHECK(in100.batch == 40);
    CHECK(in100.lr == doctest::Approx(4e-3));
    CHECK_THROWS_AS(lr_preset("nope"), ConfigError);
}

TEST_CASE("warmup starts at zero and peaks at base_lr, per stage") {
    const CurriculumConfig cfg = toy_cfg();
    const double base = base_lr(cfg);
    const int steps = 10;

    CHECK(lr_at(cfg, 0, 0, steps) == doctest::Approx(0.0));
    CHECK(lr_at(cfg, cfg.warmup_epochs, 0, steps) == doctest::Approx(base));
    // schedule clock at the boundary equals the clock at epoch 0
    CHECK(lr_at(cfg, stage_boundary(cfg), 0, steps) == doctest::Approx(lr_at(cfg, 0, 0, steps)));
    CHECK(lr_at(cfg, stage_boundary(cfg) + cfg.warmup_epochs, 0, steps) ==
          doctest::Approx(base));
    // cosine tail decays toward the floor at the end of each stage
    CHECK(lr_at(cfg, 149, steps - 1, steps) < 0.01 * base);
    CHECK(lr_at(cfg, 199, steps - 1, steps) < 0.01 * base);
}

TEST_CASE("disabling the schedule reset keeps one global cosine") {
    CurriculumConfig cfg = toy_cfg();
    cfg.reset_lr_schedule_on_transition = false;
    const int steps = 10;
    const double before = lr_at(cfg, stage_boundary(cfg) - 1, steps - 1, steps);
    const double at = lr_at(cfg, stage_boundary(cfg), 0, steps);
    CHECK(at > 0.0);
    CHECK(std::abs(at - before) < 0.05 * base_lr(cfg));  // continuous through the boundary
}

TEST_CASE("lr multiplier in the plan reflects the per-stage schedule") {
    const CurriculumConfig cfg = toy_cfg();
    CHECK(plan_for_epoch(cfg, 0).lr_multiplier == doctest::Approx(0.0));
    const double mult = plan_for_epoch(cfg, cfg.warmup_epochs).lr_multiplier;
    CHECK(mult == doctest::Approx(1.0));
}

TEST_CASE("config validation rejects out-of-range fractions") {
    CurriculumConfig cfg = toy_cfg();
    cfg.stage1_fraction = 0.0;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
    cfg.stage1_fraction = 1.0;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
    cfg = toy_cfg();
    cfg.total_epochs = 0;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
}
