#include "freqvit/curriculum.hpp"

#include <cmath>
#include <numbers>

namespace freqvit::curriculum {

const char* lr_rule_name(LrRule rule) {
    switch (rule) {
        case LrRule::kSqrt: return "sqrt";
        case LrRule::kLinear: return "linear";
        case LrRule::kFixed: return "fixed";
    }
    throw std::invalid_argument("unknown lr rule");
}

LrRule lr_rule_from_name(const std::string& name) {
    if (name == "sqrt") return LrRule::kSqrt;
    if (name == "linear") return LrRule::kLinear;
    if (name == "fixed") return LrRule::kFixed;
    throw ConfigError("unknown lr_rule: " + name);
}

void validate(const CurriculumConfig& cfg) {
    if (cfg.total_epochs < 1) throw ConfigError("total_epochs must be >= 1");
    if (!(cfg.stage1_fraction > 0.0 && cfg.stage1_fraction < 1.0))
        throw ConfigError("stage1_fraction must be in (0, 1)");
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (cfg.stage1_batch_size != 0 && cfg.stage1_batch_size != cfg.batch_size &&
        !cfg.allow_batch_size_override)
        throw ConfigError("stage1_batch_size differs but allow_batch_size_override is off");
    if (cfg.lr_ref_batch < 1) throw ConfigError("lr_ref_batch must be >= 1");
    if (cfg.lr_ref <= 0.0) throw ConfigError("lr_ref must be > 0");
    if (cfg.warmup_epochs < 0) throw ConfigError("warmup_epochs must be >= 0");
    if (cfg.n_local_crops < 0) throw ConfigError("n_local_crops must be >= 0");
}

int stage_boundary(const CurriculumConfig& cfg) {
    return static_cast<int>(std::floor(cfg.stage1_fraction * cfg.total_epochs));
}

StagePlan plan_for_epoch(const CurriculumConfig& cfg, int epoch) {
    if (epoch < 0 || epoch >= cfg.total_epochs)
        throw std::out_of_range("plan_for_epoch: epoch " + std::to_string(epoch) +
                                " outside [0, " + std::to_string(cfg.total_epochs) + ")");
    const int boundary = stage_boundary(cfg);
    StagePlan plan;
    plan.stage = epoch < boundary ? Stage::kLowFreq : Stage::kFullRes;
    if (plan.stage == Stage::kLowFreq) {
        plan.global_res = cfg.stage1_global_res;
        plan.local_res = cfg.stage1_local_res;
        plan.gp_active = false;
        plan.batch_size = (cfg.allow_batch_size_override && cfg.stage1_batch_size > 0)
                              ? cfg.stage1_batch_size
                              : cfg.batch_size;
    } else {
        plan.global_res = cfg.stage2_global_res;
        plan.local_res = cfg.stage2_local_res;
        plan.gp_active = cfg.gp_enabled_stage2;
        plan.batch_size = cfg.batch_size;
    }
    plan.lr_multiplier = lr_at(cfg, epoch, 0, 1) / base_lr(cfg);
    return plan;
}

double base_lr(const CurriculumConfig& cfg) {
    if (cfg.batch_size <= 0 || cfg.lr_ref_batch <= 0)
        throw std::invalid_argument("base_lr: batch sizes must be positive");
    const double ratio = static_cast<double>(cfg.batch_size) / cfg.lr_ref_batch;
    switch (cfg.lr_rule) {
        case LrRule::kSqrt: return cfg.lr_ref * std::sqrt(ratio);
        case LrRule::kLinear: return cfg.lr_ref * ratio;
        case LrRule::kFixed: return cfg.lr_ref;
    }
    throw std::invalid_argument("unknown lr rule");
}

LrPreset lr_preset(const std::string& name) {
    if (name == "vitb16_in1k") return {512, 7.9e-4};
    if (name == "vits16_in100") return {40, 4e-3};
    throw ConfigError("unknown lr preset: " + name);
}

double lr_at(const CurriculumConfig& cfg, int epoch, int step, int steps_per_epoch) {
    if (epoch < 0 || epoch >= cfg.total_epochs)
        throw std::out_of_range("lr_at: epoch out of range");
    if (steps_per_epoch < 1) throw std::invalid_argument("lr_at: steps_per_epoch must be >= 1");

    const int boundary = stage_boundary(cfg);
    int stage_start = 0;
    int stage_len = cfg.total_epochs;
    if (cfg.reset_lr_schedule_on_transition && boundary > 0 && boundary < cfg.total_epochs) {
        if (epoch < boundary) {
            stage_len = boundary;
        } else {
            stage_start = boundary;
            stage_len = cfg.total_epochs - boundary;
        }
    }

    const double base = base_lr(cfg);
    const double x = (epoch - stage_start) +
                     static_cast<double>(step) / static_cast<double>(steps_per_epoch);
    const double w = static_cast<double>(cfg.warmup_epochs);
    if (w > 0.0 && x < w) return base * x / w;
    if (static_cast<double>(stage_len) <= w) return base;  // degenerate stage
    const double t = (x - w) / (static_cast<double>(stage_len) - w);
    return cfg.min_lr + (base - cfg.min_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace freqvit::curriculum
