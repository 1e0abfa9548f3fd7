#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "freqvit/datagen.hpp"
#include "freqvit/train.hpp"

using namespace freqvit;
using namespace freqvit::ssl;

namespace {

EncoderCfg smoke_encoder() {
    EncoderCfg cfg;
    cfg.patch = 8;
    cfg.dim = 32;
    cfg.depth = 2;
    cfg.heads = 4;
    cfg.prototypes = 32;
    cfg.head_hidden = 32;
    cfg.channels = 3;
    return cfg;
}

curriculum::CurriculumConfig smoke_curriculum(int epochs) {
    curriculum::CurriculumConfig cfg;
    cfg.total_epochs = epochs;
    cfg.stage1_fraction = 0.5;
    cfg.stage1_global_res = 16;
    cfg.stage1_local_res = 8;
    cfg.stage2_global_res = 32;
    cfg.stage2_local_res = 16;
    cfg.n_local_crops = 2;
    cfg.batch_size = 16;
    cfg.warmup_epochs = 1;
    cfg.lr_ref = 5e-4;
    cfg.lr_ref_batch = 64;
    cfg.weight_decay = 0.01;
    return cfg;
}

std::vector<ImageTensor> smoke_dataset(int count, uint64_t seed) {
    datagen::SynthCfg scfg;
    scfg.classes = 4;
    scfg.resolution = 32;
    scfg.seed = seed;
    std::vector<ImageTensor> images;
    for (int i = 0; i < count; ++i)
        images.push_back(datagen::render_synth_image(scfg, i % 4, i / 4, 0));
    return images;
}

// parameter hash that skips the positional grid
uint64_t checksum_except_pos(const EncoderParams<float>& p) {
    uint64_t h = kFnvOffset;
    auto& mut = const_cast<EncoderParams<float>&>(p);
    for (auto& ref : param_refs(mut)) {
        if (ref.name == "pos") continue;
        h = fnv1a64_str(ref.name, h);
        h = fnv1a64(ref.tensor->v.data(), ref.tensor->v.size() * sizeof(float), h);
    }
    return h;
}

bool all_zero(const EncoderParams<float>& p) {
    auto& mut = const_cast<EncoderParams<float>&>(p);
    for (auto& ref : param_refs(mut))
        for (float v : ref.tensor->v)
            if (v != 0.0f) return false;
    return true;
}

}  // namespace

TEST_CASE("teacher starts as an identical copy of the student") {
    TrainState st = make_train_state(smoke_encoder(), 16, 5);
    CHECK(params_checksum(st.student) == params_checksum(st.teacher));
    CHECK(all_zero(st.adam_m));
    CHECK(all_zero(st.adam_v));
}

TEST_CASE("stage transition resets the optimizer and interpolates the positional grid") {
    const EncoderCfg ecfg = smoke_encoder();
    curriculum::CurriculumConfig ccfg = smoke_curriculum(8);  // boundary at 4
    TrainState st = make_train_state(ecfg, ccfg.stage1_global_res, 7);

    // fake some optimizer history
    st.adam_m.patch_w.v[0] = 1.5f;
    st.adam_v.blocks[0].wq.v[5] = 2.5f;
    st.step = 123;
    st.epoch = curriculum::stage_boundary(ccfg);

    const uint64_t weights_before = checksum_except_pos(st.student);
    const uint64_t teacher_before = checksum_except_pos(st.teacher);
    const Tensor<float> expected_pos =
        interp_pos_embed(st.student.pos, st.student.pos_grid,
                         ccfg.stage2_global_res / ecfg.patch, ecfg.dim);

    curriculum::on_stage_transition(st, ccfg);

    CHECK(all_zero(st.adam_m));
    CHECK(all_zero(st.adam_v));
    CHECK(st.step == 0);
    CHECK(checksum_except_pos(st.student) == weights_before);
    CHECK(checksum_except_pos(st.teacher) == teacher_before);
    CHECK(st.student.pos_grid == ccfg.stage2_global_res / ecfg.patch);
    REQUIRE(st.student.pos.v.size() == expected_pos.v.size());
    for (size_t i = 0; i < expected_pos.v.size(); ++i)
        CHECK(st.student.pos.v[i] == expected_pos.v[i]);

    // calling twice is an error
    CHECK_THROWS_AS(curriculum::on_stage_transition(st, ccfg), std::logic_error);
}

TEST_CASE("stage transition at the wrong epoch is rejected") {
    curriculum::CurriculumConfig ccfg = smoke_curriculum(8);
    TrainState st = make_train_state(smoke_encoder(), 16, 7);
    st.epoch = 2;  // boundary is 4
    CHECK_THROWS_AS(curriculum::on_stage_transition(st, ccfg), std::logic_error);
}

TEST_CASE("transition without optimizer reset keeps moments but reshapes the pos block") {
    curriculum::CurriculumConfig ccfg = smoke_curriculum(8);
    ccfg.reset_optimizer_on_transition = false;
    TrainState st = make_train_state(smoke_encoder(), 16, 3);
    st.adam_m.patch_w.v[0] = 4.0f;
    st.step = 55;
    st.epoch = curriculum::stage_boundary(ccfg);
    curriculum::on_stage_transition(st, ccfg);
    CHECK(st.adam_m.patch_w.v[0] == 4.0f);
    CHECK(st.step == 55);
    CHECK(st.adam_m.pos.v.size() == st.student.pos.v.size());
    for (float v : st.adam_m.pos.v) CHECK(v == 0.0f);
}

TEST_CASE("two-epoch smoke run writes one metrics row per epoch and is deterministic") {
    namespace fs = std::filesystem;
    const auto images = smoke_dataset(64, 99);
    const EncoderCfg ecfg = smoke_encoder();
    curriculum::CurriculumConfig ccfg = smoke_curriculum(2);
    LossCfg lcfg;

    TrainOptions opts;
    opts.threads = 2;
    opts.config_hash = 0x1234;
    const auto dir = fs::temp_directory_path() / "freqvit_tests" / "smoke_a";
    fs::remove_all(dir);
    opts.out_dir = dir.string();

    const TrainResult a = train_run(images, ccfg, ecfg, lcfg, 42, opts);
    CHECK(a.metrics.size() == 2);
    CHECK(std::isfinite(a.metrics[0].loss));
    CHECK(a.metrics[1].cum_flops > a.metrics[0].cum_flops);
    CHECK(fs::exists(dir / "metrics.csv"));
    CHECK(fs::exists(dir / "checkpoint" / "manifest.txt"));

    TrainOptions opts_b = opts;
    const auto dir_b = fs::temp_directory_path() / "freqvit_tests" / "smoke_b";
    fs::remove_all(dir_b);
    opts_b.out_dir = dir_b.string();
    opts_b.threads = 1;  // determinism must not depend on the worker count
    const TrainResult b = train_run(images, ccfg, ecfg, lcfg, 42, opts_b);

    CHECK(a.metrics_csv == b.metrics_csv);
    CHECK(params_checksum(a.state.student) == params_checksum(b.state.student));
    CHECK(params_checksum(a.state.teacher) == params_checksum(b.state.teacher));
    CHECK(checkpoint_checksum((dir / "checkpoint").string()) ==
          checkpoint_checksum((dir_b / "checkpoint").string()));

    const TrainResult c = train_run(images, ccfg, ecfg, lcfg, 43, opts_b);
    CHECK(params_checksum(c.state.student) != params_checksum(a.state.student));
}

TEST_CASE("curriculum run switches stage at the boundary and logs the token ratio") {
    const auto images = smoke_dataset(32, 5);
    const EncoderCfg ecfg = smoke_encoder();
    curriculum::CurriculumConfig ccfg = smoke_curriculum(4);  // boundary at 2
    ccfg.batch_size = 16;
    LossCfg lcfg;
    TrainOptions opts;
    opts.threads = 2;

    const TrainResult r = train_run(images, ccfg, ecfg, lcfg, 1, opts);
    REQUIRE(r.metrics.size() == 4);
    CHECK(r.metrics[0].stage == curriculum::Stage::kLowFreq);
    CHECK(r.metrics[1].stage == curriculum::Stage::kLowFreq);
    CHECK(r.metrics[2].stage == curriculum::Stage::kFullRes);
    CHECK(r.metrics[3].stage == curriculum::Stage::kFullRes);
    // 16x16 at patch 8 -> 4 tokens; 32x32 -> 16 tokens: a 75% reduction
    CHECK(r.metrics[0].tokens == 4);
    CHECK(r.metrics[2].tokens == 16);
    CHECK(r.state.transition_done);
    CHECK(r.state.student.pos_grid == 4);
}

TEST_CASE("baseline mode keeps one resolution and never transitions") {
    const auto images = smoke_dataset(32, 6);
    curriculum::CurriculumConfig ccfg = smoke_curriculum(3);
    LossCfg lcfg;
    TrainOptions opts;
    opts.baseline = true;
    opts.threads = 2;
    const TrainResult r = train_run(images, ccfg, smoke_encoder(), lcfg, 2, opts);
    for (const auto& row : r.metrics) {
        CHECK(row.stage == curriculum::Stage::kFullRes);
        CHECK(row.tokens == 16);
    }
    CHECK(!r.state.transition_done);
}

TEST_CASE("teacher follows the EMA recursion only: m_ema = 1 freezes it") {
    const auto images = smoke_dataset(32, 7);
    curriculum::CurriculumConfig ccfg = smoke_curriculum(2);
    LossCfg lcfg;
    lcfg.ema_momentum_start = 1.0;
    lcfg.ema_momentum_end = 1.0;
    TrainOptions opts;
    opts.threads = 2;
    const EncoderCfg ecfg = smoke_encoder();
    const TrainResult r = train_run(images, ccfg, ecfg, lcfg, 3, opts);

    TrainState init = make_train_state(ecfg, ccfg.stage1_global_res, 3);
    init.epoch = curriculum::stage_boundary(ccfg);
    curriculum::on_stage_transition(init, ccfg);  // teacher pos is interpolated at boundary
    CHECK(params_checksum(r.state.teacher) == params_checksum(init.teacher));
    CHECK(params_checksum(r.state.student) != params_checksum(init.student));
}

TEST_CASE("teacher entropy stays above a collapse floor on short runs") {
    curriculum::CurriculumConfig ccfg = smoke_curriculum(3);
    LossCfg lcfg;
    const EncoderCfg ecfg = smoke_encoder();
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        const auto images = smoke_dataset(32, 100 + seed);
        TrainOptions opts;
        opts.threads = 2;
        const TrainResult r = train_run(images, ccfg, ecfg, lcfg, seed, opts);
        // marginal prototype-usage entropy; a hard collapse pins it near zero
        const double floor = 0.1 * std::log(double(ecfg.prototypes));
        for (double h : r.teacher_entropy) CHECK(h > floor);
    }
}

TEST_CASE("checkpoint save/load round-trips the full train state") {
    namespace fs = std::filesystem;
    const auto images = smoke_dataset(32, 8);
    curriculum::CurriculumConfig ccfg = smoke_curriculum(2);
    LossCfg lcfg;
    TrainOptions opts;
    opts.threads = 2;
    const TrainResult r = train_run(images, ccfg, smoke_encoder(), lcfg, 4, opts);

    const auto dir = fs::temp_directory_path() / "freqvit_tests" / "ckpt_roundtrip";
    fs::remove_all(dir);
    save_checkpoint(dir.string(), r.state, 0xbeef, 4);
    const TrainState back = load_checkpoint(dir.string());
    CHECK(params_checksum(back.student) == params_checksum(r.state.student));
    CHECK(params_checksum(back.teacher) == params_checksum(r.state.teacher));
    CHECK(params_checksum(back.adam_m) == params_checksum(r.state.adam_m));
    CHECK(back.step == r.state.step);
    CHECK(back.epoch == r.state.epoch);
    CHECK(back.transition_done == r.state.transition_done);
    REQUIRE(back.center.size() == r.state.center.size());
    for (size_t i = 0; i < back.center.size(); ++i) CHECK(back.center[i] == r.state.center[i]);
}

TEST_CASE("train_run validates inputs") {
    curriculum::CurriculumConfig ccfg = smoke_curriculum(2);
    LossCfg lcfg;
    TrainOptions opts;
    CHECK_THROWS_AS(train_run({}, ccfg, smoke_encoder(), lcfg, 1, opts), std::invalid_argument);

    auto images = smoke_dataset(8, 9);
    ccfg.batch_size = 100;  // larger than the dataset
    CHECK_THROWS_AS(train_run(images, ccfg, smoke_encoder(), lcfg, 1, opts), ConfigError);

    ccfg = smoke_curriculum(2);
    ccfg.stage1_global_res = 12;  // not divisible by patch 8
    CHECK_THROWS_AS(train_run(images, ccfg, smoke_encoder(), lcfg, 1, opts), ConfigError);
}
