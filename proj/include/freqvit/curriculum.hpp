// Two-stage schedule state machine: stage boundary, per-stage resolutions and
// augmentation toggles, learning-rate law, warmup+cosine schedule.
#pragma once

#include "freqvit/augment.hpp"

namespace freqvit::curriculum {

enum class LrRule { kSqrt, kLinear, kFixed };

const char* lr_rule_name(LrRule rule);
LrRule lr_rule_from_name(const std::string& name);

struct CurriculumConfig {
    int total_epochs = 100;
    double stage1_fraction = 0.75;
    int stage1_global_res = 112;
    int stage1_local_res = 48;
    int stage2_global_res = 224;
    int stage2_local_res = 96;
    int n_local_crops = 8;
    double global_crop_min_scale = 0.32;
    double global_crop_max_scale = 1.0;
    double local_crop_min_scale = 0.05;
    double local_crop_max_scale = 0.32;

    bool gp_enabled_stage2 = true;
    augment::GaussianPatchCfg gp_cfg;
    bool gp_globals_only = false;  // default: patch every student view

    int batch_size = 64;
    // Appendix-style ablations may override the stage-1 batch size; the
    // default contract keeps it constant across both stages.
    bool allow_batch_size_override = false;
    int stage1_batch_size = 0;  // 0 = same as batch_size

    LrRule lr_rule = LrRule::kSqrt;
    double lr_ref = 5e-4;
    int lr_ref_batch = 256;
    int warmup_epochs = 2;
    double min_lr = 1e-6;
    double weight_decay = 0.04;
    // prototype-layer gradients are zeroed for this many initial epochs
    int freeze_prototypes_epochs = 1;
    // full-model gradient-norm clip; 0 disables
    double grad_clip = 3.0;

    bool reset_optimizer_on_transition = true;
    bool reset_lr_schedule_on_transition = true;
    bool reset_ema_schedule_on_transition = false;
};

void validate(const CurriculumConfig& cfg);

// floor(stage1_fraction * total_epochs)
int stage_boundary(const CurriculumConfig& cfg);

enum class Stage { kLowFreq, kFullRes };

struct StagePlan {
    Stage stage = Stage::kLowFreq;
    int global_res = 0;
    int local_res = 0;
    bool gp_active = false;
    int batch_size = 0;
    double lr_multiplier = 0.0;  // lr at the first step of the epoch / base_lr
};

StagePlan plan_for_epoch(const CurriculumConfig& cfg, int epoch);

// sqrt rule: lr_ref * sqrt(batch / batch_ref); linear: lr_ref * batch / batch_ref.
double base_lr(const CurriculumConfig& cfg);

// Published anchor points, stored as data rather than derived.
struct LrPreset {
    int batch = 0;
    double lr = 0.0;
};
LrPreset lr_preset(const std::string& name);  // "vitb16_in1k", "vits16_in100"

// Linear warmup over warmup_epochs then cosine decay to min_lr, per stage.
// The schedule clock restarts at the boundary when
// reset_lr_schedule_on_transition is set.
double lr_at(const CurriculumConfig& cfg, int epoch, int step, int steps_per_epoch);

}  // namespace freqvit::curriculum
