// Bicubic resampling (cubic convolution kernel, separable 4x4 support,
// corner-anchored coordinate mapping) and random square crop geometry.
#pragma once

#include "freqvit/core.hpp"

namespace freqvit::imaging {

constexpr double kDefaultKernelA = -0.5;

// Piecewise cubic convolution kernel w(t); zero for |t| >= 2.
double kernel_weight(double t, double a = kDefaultKernelA);

// Resizes each channel by the separable 4x4 cubic convolution at the
// corner-anchored mapped coordinate (x = u * W_in / W_out). Out-of-range
// source indices are clamped to the border; the result is clamped to [0, 1].
ImageTensor resize_bicubic(const ImageTensor& img, int out_h, int out_w,
                           double a = kDefaultKernelA);

struct CropSpec {
    int top = 0;
    int left = 0;
    int side = 0;
    int src_h = 0;
    int src_w = 0;
};

// Square crop with area ratio s ~ U(s_min, s_max): side = round(sqrt(s*H*W)),
// clamped to [1, min(H, W)]; placement uniform over valid top-left corners.
// Bounds must satisfy 0.05 <= s_min <= s_max <= 1.0.
CropSpec sample_crop(Prng& rng, int h, int w, double s_min, double s_max);

// True when the bounds sit inside the stricter published constraint
// (s_min >= 0.08); callers may warn when a config strays below it.
bool crop_bounds_within_paper(double s_min, double s_max);

ImageTensor extract_crop(const ImageTensor& img, const CropSpec& crop);

struct CropCfg {
    int n_local = 8;
    int global_out = 224;
    int local_out = 96;
    double global_min_scale = 0.32;
    double global_max_scale = 1.0;
    double local_min_scale = 0.05;
    double local_max_scale = 0.32;
    double kernel_a = kDefaultKernelA;
};

struct MultiCrop {
    std::vector<ImageTensor> globals;  // always 2
    std::vector<ImageTensor> locals;   // n_local
};

// Two global crops plus n_local local crops, each resized to the configured
// stage resolution. Draw order per crop: scale, top, left.
MultiCrop global_local_crops(Prng& rng, const ImageTensor& img, const CropCfg& cfg);

}  // namespace freqvit::imaging
