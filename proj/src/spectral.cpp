#include "freqvit/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "freqvit/threads.hpp"

namespace freqvit::spectral {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// In-place iterative radix-2 Cooley-Tukey, unnormalized.
void fft_inplace(std::complex<double>* a, int n, bool inverse) {
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (int len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? kTwoPi : -kTwoPi) / len;
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (int i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (int k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> t = a[i + k + len / 2] * w;
                a[i + k] = u + t;
                a[i + k + len / 2] = u - t;
                w *= wl;
            }
        }
    }
}

// Rows then columns, scaled by 1/n (unitary 2-D convention).
void fft2_inplace(std::vector<std::complex<double>>& a, int n, bool inverse) {
    for (int r = 0; r < n; ++r) fft_inplace(a.data() + static_cast<size_t>(r) * n, n, inverse);
    std::vector<std::complex<double>> col(n);
    for (int c = 0; c < n; ++c) {
        for (int r = 0; r < n; ++r) col[r] = a[static_cast<size_t>(r) * n + c];
        fft_inplace(col.data(), n, inverse);
        for (int r = 0; r < n; ++r) a[static_cast<size_t>(r) * n + c] = col[r];
    }
    const double scale = 1.0 / n;
    for (auto& z : a) z *= scale;
}

void require_square_pow2(int n, const char* what) {
    if (!is_power_of_two(n))
        throw std::invalid_argument(std::string(what) + ": size must be a power of two, got " +
                                    std::to_string(n));
}

}  // namespace

RealGrid RealGrid::zeros(int n) {
    RealGrid g;
    g.n = n;
    g.v.assign(static_cast<size_t>(n) * n, 0.0);
    return g;
}

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

Spectrum dft2(const RealGrid& g) {
    require_square_pow2(g.n, "dft2");
    if (g.v.size() != static_cast<size_t>(g.n) * g.n)
        throw std::invalid_argument("dft2: grid is not square");
    Spectrum s;
    s.n = g.n;
    s.coef.assign(g.v.begin(), g.v.end());
    fft2_inplace(s.coef, s.n, false);
    return s;
}

RealGrid idft2(const Spectrum& s) {
    require_square_pow2(s.n, "idft2");
    std::vector<std::complex<double>> a = s.coef;
    fft2_inplace(a, s.n, true);
    RealGrid g = RealGrid::zeros(s.n);
    for (size_t i = 0; i < a.size(); ++i) g.v[i] = a[i].real();
    return g;
}

RealGrid image_channel(const ImageTensor& img, int ch) {
    if (img.height != img.width)
        throw std::invalid_argument("image_channel: image must be square");
    RealGrid g = RealGrid::zeros(img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) g.at(y, x) = img.at(y, x, ch);
    return g;
}

double band_energy(const Spectrum& s, double r_lo, double r_hi) {
    double e = 0.0;
    for (int i = 0; i < s.n; ++i) {
        const int fi = std::min(i, s.n - i);
        for (int j = 0; j < s.n; ++j) {
            const int fj = std::min(j, s.n - j);
            const double r = std::hypot(static_cast<double>(fi), static_cast<double>(fj));
            if (r >= r_lo && r < r_hi) e += std::norm(s.at(i, j));
        }
    }
    return e;
}

bool is_canonical_freq(int i, int j, int n) {
    if (i < 0 || j < 0 || i >= n || j >= n) return false;
    const int mi = (n - i) % n;
    const int mj = (n - j) % n;
    return (i < mi) || (i == mi && j <= mj);
}

RealGrid fourier_basis(int i, int j, int n) {
    require_square_pow2(n, "fourier_basis");
    if (i < 0 || j < 0 || i >= n || j >= n)
        throw std::out_of_range("fourier_basis: frequency index out of range");
    if (!is_canonical_freq(i, j, n))
        throw std::out_of_range("fourier_basis: (i, j) is not in the canonical half-plane");

    RealGrid g = RealGrid::zeros(n);
    double norm_sq = 0.0;
    for (int u = 0; u < n; ++u) {
        for (int v = 0; v < n; ++v) {
            const double phase = kTwoPi * (static_cast<double>(i) * u + static_cast<double>(j) * v) / n;
            const double val = std::cos(phase);
            g.at(u, v) = val;
            norm_sq += val * val;
        }
    }
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (auto& x : g.v) x *= inv;
    return g;
}

// ---------------------------------------------------------------------------
// Sensitivity heatmap
// ---------------------------------------------------------------------------

double default_perturbation_norm(int n) { return 4.0 * n / 255.0; }

HeatmapGrid sensitivity_heatmap(const Predictor& model,
                                const std::vector<ImageTensor>& images,
                                const std::vector<int>& labels, const HeatmapCfg& cfg) {
    if (images.empty() || images.size() != labels.size())
        throw std::invalid_argument("sensitivity_heatmap: empty or mismatched dataset");
    const int n = images[0].height;
    require_square_pow2(n, "sensitivity_heatmap");
    for (const auto& img : images)
        if (img.height != n || img.width != n)
            throw std::invalid_argument("sensitivity_heatmap: model/dataset resolution mismatch");

    // images_per_class samples per class, drawn without replacement.
    int num_classes = 0;
    for (int l : labels) num_classes = std::max(num_classes, l + 1);
    std::vector<std::vector<size_t>> by_class(num_classes);
    for (size_t k = 0; k < images.size(); ++k) by_class[labels[k]].push_back(k);

    std::vector<size_t> sample;
    Prng pick = Prng::derive(cfg.seed, 0xffffffffull, 0);  // reserved sampling lane
    for (auto& members : by_class) {
        const int take = std::min<int>(cfg.images_per_class, static_cast<int>(members.size()));
        for (int t = 0; t < take; ++t) {
            const size_t swap_with =
                t + static_cast<size_t>(pick.uniform_int(0, members.size() - 1 - t));
            std::swap(members[t], members[swap_with]);
            sample.push_back(members[t]);
        }
    }
    if (sample.empty()) throw std::invalid_argument("sensitivity_heatmap: no samples");

    const double v = cfg.v < 0.0 ? default_perturbation_norm(n) : cfg.v;

    HeatmapGrid grid;
    grid.n = n;
    grid.values.assign(static_cast<size_t>(n) * n, 0.0);
    grid.perturbation_norm = v;
    grid.native_resolution = n;
    grid.images_per_class = cfg.images_per_class;

    int clean_errors = 0;
    std::vector<int> clean_pred(sample.size());
    for (size_t k = 0; k < sample.size(); ++k) {
        clean_pred[k] = model(images[sample[k]]);
        if (clean_pred[k] != labels[sample[k]]) ++clean_errors;
    }
    grid.clean_error = static_cast<double>(clean_errors) / static_cast<double>(sample.size());

    std::vector<std::pair<int, int>> cells;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (is_canonical_freq(i, j, n)) cells.emplace_back(i, j);

    parallel_for(cells.size(), cfg.threads, [&](size_t ci) {
        const auto [i, j] = cells[ci];
        const RealGrid basis = fourier_basis(i, j, n);
        const uint64_t cell_index = static_cast<uint64_t>(i) * n + j;
        int errors = 0;
        for (size_t k = 0; k < sample.size(); ++k) {
            // sign stream keyed by the image's dataset index, not sample order
            Prng rng = Prng::derive(cfg.seed, cell_index, sample[k]);
            const double r = rng.uniform() < 0.5 ? -1.0 : 1.0;
            ImageTensor pert = images[sample[k]];
            for (int y = 0; y < n; ++y)
                for (int x = 0; x < n; ++x) {
                    const float add = static_cast<float>(r * v * basis.at(y, x));
                    for (int ch = 0; ch < pert.channels; ++ch) {
                        float& px = pert.at(y, x, ch);
                        px = std::min(1.0f, std::max(0.0f, px + add));
                    }
                }
            if (model(pert) != labels[sample[k]]) ++errors;
        }
        grid.values[static_cast<size_t>(i) * n + j] =
            static_cast<double>(errors) / static_cast<double>(sample.size());
    });

    // Mirror conjugate cells.
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (!is_canonical_freq(i, j, n))
                grid.values[static_cast<size_t>(i) * n + j] = grid.at((n - i) % n, (n - j) % n);
    return grid;
}

void write_heatmap_csv(const std::string& path, const HeatmapGrid& grid,
                       uint64_t config_hash, uint64_t seed) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(config_hash));
    out << "# config_hash=" << buf << " seed=" << seed << "\n";
    out << "# n=" << grid.n << " v=" << grid.perturbation_norm
        << " clean_error=" << grid.clean_error << " images_per_class=" << grid.images_per_class
        << " layout=dft (DC at row 0, col 0)\n";
    for (int i = 0; i < grid.n; ++i) {
        for (int j = 0; j < grid.n; ++j) {
            std::snprintf(buf, sizeof(buf), "%.6f", grid.at(i, j));
            out << buf << (j + 1 == grid.n ? "\n" : ",");
        }
    }
}

void write_heatmap_pgm(const std::string& pgm_path, const std::string& sidecar_path,
                       const HeatmapGrid& grid) {
    const int n = grid.n;
    double lo = grid.values[0], hi = grid.values[0];
    for (double x : grid.values) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    const double span = hi > lo ? hi - lo : 1.0;

    ImageTensor img = ImageTensor::zeros(n, n, 1);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            // fftshift for display: DC lands at (n/2, n/2)
            const int si = (i + n / 2) % n;
            const int sj = (j + n / 2) % n;
            img.at(si, sj, 0) = static_cast<float>((grid.at(i, j) - lo) / span);
        }
    save_image(img, pgm_path);

    std::ofstream side(sidecar_path);
    if (!side) throw std::runtime_error("cannot write file: " + sidecar_path);
    side << "heatmap PGM normalization\n";
    side << "min_error=" << lo << "\n";
    side << "max_error=" << hi << "\n";
    side << "perturbation_norm=" << grid.perturbation_norm << "\n";
    side << "clean_error=" << grid.clean_error << "\n";
    side << "native_resolution=" << grid.native_resolution << "\n";
    side << "layout=fftshifted (DC at center); gray = (error - min) / (max - min)\n";
}

}  // namespace freqvit::spectral
