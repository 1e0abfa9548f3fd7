#include "freqvit/imaging.hpp"

#include <algorithm>
#include <cmath>

namespace freqvit::imaging {

double kernel_weight(double t, double a) {
    const double x = std::abs(t);
    if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

namespace {

struct TapRow {
    int idx[4];     // clamped source indices
    double wts[4];  // kernel weights for offsets -1..2
};

// Taps for one output axis position under the corner-anchored mapping.
TapRow make_taps(int out_pos, int in_size, int out_size, double a) {
    const double x = static_cast<double>(out_pos) * in_size / out_size;
    const int x0 = static_cast<int>(std::floor(x));
    const double dx = x - x0;
    TapRow row;
    for (int m = -1; m <= 2; ++m) {
        row.wts[m + 1] = kernel_weight(static_cast<double>(m) - dx, a);
        row.idx[m + 1] = std::clamp(x0 + m, 0, in_size - 1);
    }
    return row;
}

}  // namespace

ImageTensor resize_bicubic(const ImageTensor& img, int out_h, int out_w, double a) {
    if (out_h < 1 || out_w < 1)
        throw std::invalid_argument("resize_bicubic: output dims must be >= 1");

    std::vector<TapRow> col_taps(out_w);
    for (int ox = 0; ox < out_w; ++ox) col_taps[ox] = make_taps(ox, img.width, out_w, a);

    ImageTensor out = ImageTensor::zeros(out_h, out_w, img.channels);
    const int c = img.channels;
    for (int oy = 0; oy < out_h; ++oy) {
        const TapRow ry = make_taps(oy, img.height, out_h, a);
        for (int ox = 0; ox < out_w; ++ox) {
            const TapRow& rx = col_taps[ox];
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int n = 0; n < 4; ++n) {
                    const float* src_row = &img.data[(static_cast<size_t>(ry.idx[n]) * img.width) * c];
                    double row_acc = 0.0;
                    for (int m = 0; m < 4; ++m)
                        row_acc += rx.wts[m] * src_row[static_cast<size_t>(rx.idx[m]) * c + ch];
                    acc += ry.wts[n] * row_acc;
                }
                out.at(oy, ox, ch) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
            }
        }
    }
    return out;
}

bool crop_bounds_within_paper(double s_min, double s_max) {
    return s_min >= 0.08 && s_max <= 1.0;
}

CropSpec sample_crop(Prng& rng, int h, int w, double s_min, double s_max) {
    if (s_min > s_max) throw std::invalid_argument("sample_crop: s_min > s_max");
    if (s_min < 0.05 || s_max > 1.0)
        throw std::invalid_argument("sample_crop: bounds must lie in [0.05, 1.0]");
    if (h < 1 || w < 1) throw std::invalid_argument("sample_crop: empty source");

    const double s = s_min + rng.uniform() * (s_max - s_min);
    const double raw = std::sqrt(s * static_cast<double>(h) * static_cast<double>(w));
    const int side = std::clamp(static_cast<int>(std::lround(raw)), 1, std::min(h, w));

    CropSpec crop;
    crop.side = side;
    crop.top = static_cast<int>(rng.uniform_int(0, static_cast<uint64_t>(h - side)));
    crop.left = static_cast<int>(rng.uniform_int(0, static_cast<uint64_t>(w - side)));
    crop.src_h = h;
    crop.src_w = w;
    return crop;
}

ImageTensor extract_crop(const ImageTensor& img, const CropSpec& crop) {
    if (crop.top < 0 || crop.left < 0 || crop.side < 1 ||
        crop.top + crop.side > img.height || crop.left + crop.side > img.width)
        throw std::invalid_argument("extract_crop: crop outside image");
    ImageTensor out = ImageTensor::zeros(crop.side, crop.side, img.channels);
    for (int y = 0; y < crop.side; ++y) {
        const float* src = &img.data[((static_cast<size_t>(crop.top) + y) * img.width +
                                      crop.left) * img.channels];
        std::copy(src, src + static_cast<size_t>(crop.side) * img.channels,
                  &out.data[static_cast<size_t>(y) * crop.side * img.channels]);
    }
    return out;
}

MultiCrop global_local_crops(Prng& rng, const ImageTensor& img, const CropCfg& cfg) {
    MultiCrop mc;
    for (int i = 0; i < 2; ++i) {
        const CropSpec spec = sample_crop(rng, img.height, img.width,
                                          cfg.global_min_scale, cfg.global_max_scale);
        mc.globals.push_back(resize_bicubic(extract_crop(img, spec), cfg.global_out,
                                            cfg.global_out, cfg.kernel_a));
    }
    for (int i = 0; i < cfg.n_local; ++i) {
        const CropSpec spec = sample_crop(rng, img.height, img.width,
                                          cfg.local_min_scale, cfg.local_max_scale);
        mc.locals.push_back(resize_bicubic(extract_crop(img, spec), cfg.local_out,
                                           cfg.local_out, cfg.kernel_a));
    }
    return mc;
}

}  // namespace freqvit::imaging
