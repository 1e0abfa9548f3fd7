#include "freqvit/augment.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "freqvit/imaging.hpp"

namespace freqvit::augment {

namespace {

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

// Knuth's product method; fine for the small lambda values in the table.
int poisson_draw(Prng& rng, double lambda) {
    if (lambda <= 0.0) return 0;
    const double limit = std::exp(-lambda);
    double p = 1.0;
    int k = 0;
    do {
        ++k;
        p *= rng.uniform();
    } while (p > limit);
    return k - 1;
}

ImageTensor gaussian_blur(const ImageTensor& img, double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;

    const int h = img.height, w = img.width, c = img.channels;
    ImageTensor tmp = ImageTensor::zeros(h, w, c);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k)
                    acc += kernel[k + radius] * img.at(y, std::clamp(x + k, 0, w - 1), ch);
                tmp.at(y, x, ch) = static_cast<float>(acc);
            }
    ImageTensor out = ImageTensor::zeros(h, w, c);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k)
                    acc += kernel[k + radius] * tmp.at(std::clamp(y + k, 0, h - 1), x, ch);
                out.at(y, x, ch) = clamp01(acc);
            }
    return out;
}

}  // namespace

ImageTensor apply_gaussian_patch(const ImageTensor& img, Prng& rng,
                                 const GaussianPatchCfg& cfg) {
    if (cfg.side_fraction < 0.0 || cfg.side_fraction >= 1.0)
        throw std::invalid_argument("gaussian patch: side_fraction must be in [0, 1)");
    if (cfg.scale < 0.0) throw std::invalid_argument("gaussian patch: scale must be >= 0");
    if (cfg.probability < 0.0 || cfg.probability > 1.0)
        throw std::invalid_argument("gaussian patch: probability must be in [0, 1]");

    ImageTensor out = img;
    if (rng.uniform() >= cfg.probability) return out;

    const int side = static_cast<int>(std::floor(cfg.side_fraction *
                                                 std::min(img.height, img.width)));
    if (side == 0) return out;

    const int top = static_cast<int>(rng.uniform_int(0, static_cast<uint64_t>(img.height - side)));
    const int left = static_cast<int>(rng.uniform_int(0, static_cast<uint64_t>(img.width - side)));

    for (int y = top; y < top + side; ++y)
        for (int x = left; x < left + side; ++x)
            for (int ch = 0; ch < img.channels; ++ch) {
                const double noise = 1.0 + cfg.scale * rng.gaussian();
                const double base = cfg.mode == PatchMode::kMultiply
                                        ? img.at(y, x, ch) * noise
                                        : noise;
                out.at(y, x, ch) = clamp01(base);
            }
    return out;
}

// ---------------------------------------------------------------------------
// Corruptions
// ---------------------------------------------------------------------------

namespace {

// Severity tables, index 0 = severity 1. Frozen by golden tests.
constexpr double kGaussianNoiseSigma[5] = {0.04, 0.06, 0.08, 0.09, 0.10};
constexpr double kShotNoiseLambda[5] = {60.0, 25.0, 12.0, 5.0, 3.0};
constexpr double kImpulseFraction[5] = {0.03, 0.06, 0.09, 0.17, 0.27};
constexpr double kSpeckleSigma[5] = {0.15, 0.20, 0.35, 0.45, 0.60};
constexpr double kBlurSigma[5] = {0.5, 1.0, 1.5, 2.0, 2.5};
constexpr double kContrastFactor[5] = {0.75, 0.60, 0.45, 0.30, 0.15};
constexpr double kBrightnessShift[5] = {0.1, 0.2, 0.3, 0.4, 0.5};
constexpr double kPixelateFraction[5] = {0.6, 0.5, 0.4, 0.3, 0.25};

}  // namespace

FrequencyGroup group_of(CorruptionKind kind) {
    switch (kind) {
        case CorruptionKind::kBrightness:
        case CorruptionKind::kContrast:
            return FrequencyGroup::kLow;
        case CorruptionKind::kGaussianBlur:
            return FrequencyGroup::kMid;
        case CorruptionKind::kGaussianNoise:
        case CorruptionKind::kShotNoise:
        case CorruptionKind::kImpulseNoise:
        case CorruptionKind::kSpeckleNoise:
            return FrequencyGroup::kHigh;
        case CorruptionKind::kPixelate:
            return FrequencyGroup::kHybrid;
    }
    throw std::invalid_argument("unknown corruption kind");
}

const char* kind_name(CorruptionKind kind) {
    switch (kind) {
        case CorruptionKind::kGaussianNoise: return "gaussian_noise";
        case CorruptionKind::kShotNoise: return "shot_noise";
        case CorruptionKind::kImpulseNoise: return "impulse_noise";
        case CorruptionKind::kSpeckleNoise: return "speckle_noise";
        case CorruptionKind::kGaussianBlur: return "gaussian_blur";
        case CorruptionKind::kContrast: return "contrast";
        case CorruptionKind::kBrightness: return "brightness";
        case CorruptionKind::kPixelate: return "pixelate";
    }
    throw std::invalid_argument("unknown corruption kind");
}

const char* group_name(FrequencyGroup group) {
    switch (group) {
        case FrequencyGroup::kLow: return "low";
        case FrequencyGroup::kMid: return "mid";
        case FrequencyGroup::kHigh: return "high";
        case FrequencyGroup::kHybrid: return "hybrid";
    }
    throw std::invalid_argument("unknown frequency group");
}

CorruptionKind kind_from_name(const std::string& name) {
    for (int k = 0; k < kNumCorruptionKinds; ++k) {
        const auto kind = static_cast<CorruptionKind>(k);
        if (name == kind_name(kind)) return kind;
    }
    throw std::invalid_argument("unknown corruption kind: " + name);
}

double severity_param(CorruptionKind kind, int severity) {
    if (severity < 1 || severity > kNumSeverities)
        throw std::invalid_argument("severity must be in [1, 5], got " +
                                    std::to_string(severity));
    const int i = severity - 1;
    switch (kind) {
        case CorruptionKind::kGaussianNoise: return kGaussianNoiseSigma[i];
        case CorruptionKind::kShotNoise: return kShotNoiseLambda[i];
        case CorruptionKind::kImpulseNoise: return kImpulseFraction[i];
        case CorruptionKind::kSpeckleNoise: return kSpeckleSigma[i];
        case CorruptionKind::kGaussianBlur: return kBlurSigma[i];
        case CorruptionKind::kContrast: return kContrastFactor[i];
        case CorruptionKind::kBrightness: return kBrightnessShift[i];
        case CorruptionKind::kPixelate: return kPixelateFraction[i];
    }
    throw std::invalid_argument("unknown corruption kind");
}

CorruptionSpec make_spec(CorruptionKind kind, int severity) {
    CorruptionSpec spec;
    spec.kind = kind;
    spec.severity = severity;
    spec.group = group_of(kind);
    (void)severity_param(kind, severity);  // validates severity
    return spec;
}

ImageTensor apply_corruption(const ImageTensor& img, Prng& rng, const CorruptionSpec& spec) {
    const double p = severity_param(spec.kind, spec.severity);
    const size_t count = img.data.size();
    ImageTensor out = img;

    switch (spec.kind) {
        case CorruptionKind::kGaussianNoise: {
            for (size_t i = 0; i < count; ++i)
                out.data[i] = clamp01(img.data[i] + p * rng.gaussian());
            return out;
        }
        case CorruptionKind::kShotNoise: {
            for (size_t i = 0; i < count; ++i)
                out.data[i] = clamp01(poisson_draw(rng, img.data[i] * p) / p);
            return out;
        }
        case CorruptionKind::kImpulseNoise: {
            for (int y = 0; y < img.height; ++y)
                for (int x = 0; x < img.width; ++x) {
                    if (rng.uniform() >= p) continue;
                    const float v = rng.uniform() < 0.5 ? 0.0f : 1.0f;
                    for (int ch = 0; ch < img.channels; ++ch) out.at(y, x, ch) = v;
                }
            return out;
        }
        case CorruptionKind::kSpeckleNoise: {
            for (size_t i = 0; i < count; ++i)
                out.data[i] = clamp01(img.data[i] * (1.0 + p * rng.gaussian()));
            return out;
        }
        case CorruptionKind::kGaussianBlur:
            return gaussian_blur(img, p);
        case CorruptionKind::kContrast: {
            for (int ch = 0; ch < img.channels; ++ch) {
                double mean = 0.0;
                for (int y = 0; y < img.height; ++y)
                    for (int x = 0; x < img.width; ++x) mean += img.at(y, x, ch);
                mean /= static_cast<double>(img.height) * img.width;
                for (int y = 0; y < img.height; ++y)
                    for (int x = 0; x < img.width; ++x)
                        out.at(y, x, ch) = clamp01(mean + p * (img.at(y, x, ch) - mean));
            }
            return out;
        }
        case CorruptionKind::kBrightness: {
            for (size_t i = 0; i < count; ++i) out.data[i] = clamp01(img.data[i] + p);
            return out;
        }
        case CorruptionKind::kPixelate: {
            const int small_h = std::max(1, static_cast<int>(std::lround(p * img.height)));
            const int small_w = std::max(1, static_cast<int>(std::lround(p * img.width)));
            const ImageTensor small = imaging::resize_bicubic(img, small_h, small_w);
            return imaging::resize_bicubic(small, img.height, img.width);
        }
    }
    throw std::invalid_argument("unknown corruption kind");
}

std::vector<CorruptionSpec> corruption_catalog() {
    std::vector<CorruptionSpec> specs;
    specs.reserve(kNumCorruptionKinds * kNumSeverities);
    for (int k = 0; k < kNumCorruptionKinds; ++k)
        for (int s = 1; s <= kNumSeverities; ++s)
            specs.push_back(make_spec(static_cast<CorruptionKind>(k), s));
    return specs;
}

std::string catalog_csv() {
    std::ostringstream out;
    out << "kind,severity,group,param\n";
    char buf[64];
    for (const CorruptionSpec& spec : corruption_catalog()) {
        std::snprintf(buf, sizeof(buf), "%g", severity_param(spec.kind, spec.severity));
        out << kind_name(spec.kind) << "," << spec.severity << ","
            << group_name(spec.group) << "," << buf << "\n";
    }
    return out.str();
}

}  // namespace freqvit::augment
