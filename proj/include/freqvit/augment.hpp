// Gaussian noise patching (training-time augmentation) and the corruption
// catalog used by the robustness benchmark (evaluation-time only).
#pragma once

#include "freqvit/core.hpp"

namespace freqvit::augment {

enum class PatchMode {
    kMultiply,  // x <- clamp(x * n), n ~ N(1, scale^2)
    kReplace,   // x <- clamp(n), ablation mode
};

struct GaussianPatchCfg {
    double side_fraction = 0.5;  // patch side as fraction of min(H, W), in [0, 1)
    double scale = 0.5;          // noise std
    double probability = 0.5;
    PatchMode mode = PatchMode::kMultiply;
};

// With the configured probability, draws a uniformly placed square patch of
// side floor(side_fraction * min(H, W)) and perturbs every value inside it
// with an independent draw n ~ N(1, scale^2). Pixels outside the patch are
// bit-identical to the input.
ImageTensor apply_gaussian_patch(const ImageTensor& img, Prng& rng,
                                 const GaussianPatchCfg& cfg);

// ---------------------------------------------------------------------------
// Corruption catalog
// ---------------------------------------------------------------------------

enum class CorruptionKind {
    kGaussianNoise,
    kShotNoise,
    kImpulseNoise,
    kSpeckleNoise,
    kGaussianBlur,
    kContrast,
    kBrightness,
    kPixelate,
};

enum class FrequencyGroup { kLow, kMid, kHigh, kHybrid };

struct CorruptionSpec {
    CorruptionKind kind = CorruptionKind::kGaussianNoise;
    int severity = 1;  // 1..5
    FrequencyGroup group = FrequencyGroup::kHigh;
};

constexpr int kNumCorruptionKinds = 8;
constexpr int kNumSeverities = 5;

FrequencyGroup group_of(CorruptionKind kind);
const char* kind_name(CorruptionKind kind);
const char* group_name(FrequencyGroup group);
CorruptionKind kind_from_name(const std::string& name);

// Severity parameter for (kind, severity); the tables are frozen by tests.
double severity_param(CorruptionKind kind, int severity);

CorruptionSpec make_spec(CorruptionKind kind, int severity);

ImageTensor apply_corruption(const ImageTensor& img, Prng& rng, const CorruptionSpec& spec);

// All 8 kinds x 5 severities, in kind-major order.
std::vector<CorruptionSpec> corruption_catalog();

// CSV audit dump: kind, severity, group, param.
std::string catalog_csv();

}  // namespace freqvit::augment
