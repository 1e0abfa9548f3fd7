// 2-D DFT utilities (radix-2, unitary convention), single-frequency Fourier
// basis images, and the error-sensitivity heatmap protocol.
#pragma once

#include <complex>
#include <functional>

#include "freqvit/core.hpp"

namespace freqvit::spectral {

struct RealGrid {
    int n = 0;
    std::vector<double> v;  // n x n row-major

    static RealGrid zeros(int n);
    double& at(int i, int j) { return v[static_cast<size_t>(i) * n + j]; }
    double at(int i, int j) const { return v[static_cast<size_t>(i) * n + j]; }
};

struct Spectrum {
    int n = 0;
    std::vector<std::complex<double>> coef;  // n x n, DC at (0, 0)

    std::complex<double>& at(int i, int j) { return coef[static_cast<size_t>(i) * n + j]; }
    std::complex<double> at(int i, int j) const { return coef[static_cast<size_t>(i) * n + j]; }
};

bool is_power_of_two(int n);

// Unitary pair: both directions carry a 1/n factor, so Parseval holds as
// sum |x|^2 = sum |X|^2 and idft2(dft2(x)) == x.
Spectrum dft2(const RealGrid& g);
RealGrid idft2(const Spectrum& s);

RealGrid image_channel(const ImageTensor& img, int ch);

// Centered frequency radius of bin (i, j): hypot(min(i, n-i), min(j, n-j)).
// Sums |X|^2 over bins with radius in [r_lo, r_hi).
double band_energy(const Spectrum& s, double r_lo, double r_hi);

// (i, j) is canonical when it is lexicographically <= its conjugate mirror
// ((n-i) mod n, (n-j) mod n); exactly one of each conjugate pair is canonical.
bool is_canonical_freq(int i, int j, int n);

// Real n x n matrix with unit Frobenius norm whose spectrum is supported on
// (i, j) and its conjugate mirror only. Requires a canonical (i, j).
RealGrid fourier_basis(int i, int j, int n);

// ---------------------------------------------------------------------------
// Sensitivity heatmap
// ---------------------------------------------------------------------------

struct HeatmapGrid {
    int n = 0;
    std::vector<double> values;  // n x n error rates, DFT index layout
    double perturbation_norm = 0.0;
    double clean_error = 0.0;
    int native_resolution = 0;
    int images_per_class = 0;

    double at(int i, int j) const { return values[static_cast<size_t>(i) * n + j]; }
};

using Predictor = std::function<int(const ImageTensor&)>;

struct HeatmapCfg {
    double v = -1.0;  // < 0 selects the default 4 * n / 255
    int images_per_class = 5;
    uint64_t seed = 0;
    int threads = 1;
};

double default_perturbation_norm(int n);

// For every canonical frequency, adds r * v * U(i,j) (r = +/-1 per image and
// cell, same basis added to every channel, clamped to [0,1]), re-evaluates the
// predictor on images_per_class samples per class, and records the error rate.
// Non-canonical cells mirror their conjugates. Images must be square with a
// shared power-of-two resolution.
HeatmapGrid sensitivity_heatmap(const Predictor& model,
                                const std::vector<ImageTensor>& images,
                                const std::vector<int>& labels, const HeatmapCfg& cfg);

void write_heatmap_csv(const std::string& path, const HeatmapGrid& grid,
                       uint64_t config_hash, uint64_t seed);
// PGM rendering is fftshifted (DC centered) and min-max normalized; the
// sidecar text file records the normalization and layout.
void write_heatmap_pgm(const std::string& pgm_path, const std::string& sidecar_path,
                       const HeatmapGrid& grid);

}  // namespace freqvit::spectral
