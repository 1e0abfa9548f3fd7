#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "freqvit/augment.hpp"
#include "freqvit/evalsuite.hpp"
#include "freqvit/spectral.hpp"

using namespace freqvit;
using namespace freqvit::spectral;

TEST_CASE("dft2 of a constant image puts all energy at DC") {
    const int n = 16;
    const double c = 0.37;
    RealGrid g = RealGrid::zeros(n);
    for (auto& x : g.v) x = c;
    const Spectrum s = dft2(g);
    CHECK(std::abs(s.at(0, 0)) == doctest::Approx(n * c).epsilon(1e-9));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i || j) CHECK(std::abs(s.at(i, j)) < 1e-9);
}

TEST_CASE("dft2 of a cosine gives two symmetric peaks") {
    const int n = 32;
    RealGrid g = RealGrid::zeros(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            g.at(i, j) = std::cos(2.0 * std::numbers::pi * 3.0 * i / n);
    const Spectrum s = dft2(g);
    // closed form: each peak carries n/2 under the unitary convention
    CHECK(std::abs(s.at(3, 0)) == doctest::Approx(n / 2.0).epsilon(1e-9));
    CHECK(std::abs(s.at(n - 3, 0)) == doctest::Approx(n / 2.0).epsilon(1e-9));
    double rest = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (!(j == 0 && (i == 3 || i == n - 3))) rest += std::abs(s.at(i, j));
    CHECK(rest < 1e-6);
}

TEST_CASE("dft2/idft2 are a unitary pair on random grids") {
    const int n = 64;
    Prng rng(99);
    RealGrid g = RealGrid::zeros(n);
    for (auto& x : g.v) x = rng.uniform();

    const Spectrum s = dft2(g);
    double space = 0.0, freq = 0.0;
    for (double x : g.v) space += x * x;
    for (auto& z : s.coef) freq += std::norm(z);
    CHECK(std::abs(space - freq) / space < 1e-6);  // Parseval (unitarity)

    const RealGrid back = idft2(s);
    double max_err = 0.0;
    for (size_t i = 0; i < g.v.size(); ++i)
        max_err = std::max(max_err, std::abs(back.v[i] - g.v[i]));
    CHECK(max_err < 1e-6);
}

TEST_CASE("dft2 rejects non-power-of-two sizes") {
    RealGrid g = RealGrid::zeros(12);
    CHECK_THROWS_AS(dft2(g), std::invalid_argument);
    RealGrid bad = RealGrid::zeros(8);
    bad.v.pop_back();  // not square anymore
    CHECK_THROWS_AS(dft2(bad), std::invalid_argument);
}

TEST_CASE("fourier basis has unit norm and two-bin spectral support") {
    const int n = 16;
    for (auto [i, j] : {std::pair{0, 1}, {2, 5}, {7, 3}, {0, 0}, {8, 0}, {8, 8}}) {
        const RealGrid u = fourier_basis(i, j, n);
        double norm = 0.0;
        for (double x : u.v) norm += x * x;
        CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));
    }

    // DC basis is the constant matrix 1/n
    const RealGrid dc = fourier_basis(0, 0, n);
    for (double x : dc.v) CHECK(x == doctest::Approx(1.0 / n).epsilon(1e-12));

    const Spectrum s = dft2(fourier_basis(2, 5, n));
    int nonzero = 0;
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            if (std::abs(s.at(a, b)) > 1e-9) ++nonzero;
    CHECK(nonzero == 2);
    CHECK(std::abs(s.at(2, 5)) > 1e-9);
    CHECK(std::abs(s.at(n - 2, n - 5)) > 1e-9);
}

TEST_CASE("fourier basis rejects out-of-range and non-canonical indices") {
    CHECK_THROWS_AS(fourier_basis(-1, 0, 16), std::out_of_range);
    CHECK_THROWS_AS(fourier_basis(0, 16, 16), std::out_of_range);
    CHECK(is_canonical_freq(2, 5, 16));
    CHECK(!is_canonical_freq(14, 11, 16));  // conjugate of (2, 5)
    CHECK_THROWS_AS(fourier_basis(14, 11, 16), std::out_of_range);
}

namespace {

// Two-class dataset of constant images around 0.5 with margin delta; the
// oracle model thresholds the mean pixel value (the DC coefficient).
void make_dc_dataset(int n, int per_class, double delta, std::vector<ImageTensor>* images,
                     std::vector<int>* labels) {
    for (int i = 0; i < per_class; ++i) {
        images->push_back(ImageTensor::constant(n, n, 1, static_cast<float>(0.5 - delta)));
        labels->push_back(0);
        images->push_back(ImageTensor::constant(n, n, 1, static_cast<float>(0.5 + delta)));
        labels->push_back(1);
    }
}

int dc_oracle(const ImageTensor& img) {
    double mean = 0.0;
    for (float v : img.data) mean += v;
    mean /= static_cast<double>(img.data.size());
    return mean > 0.5 ? 1 : 0;
}

}  // namespace

TEST_CASE("heatmap with v = 0 equals the clean error rate everywhere") {
    const int n = 8;
    std::vector<ImageTensor> images;
    std::vector<int> labels;
    make_dc_dataset(n, 6, 0.005, &images, &labels);
    // a model that always answers class 1 has 50% clean error
    HeatmapCfg cfg;
    cfg.v = 0.0;
    cfg.images_per_class = 5;
    cfg.seed = 3;
    const HeatmapGrid grid = sensitivity_heatmap([](const ImageTensor&) { return 1; }, images,
                                                 labels, cfg);
    CHECK(grid.clean_error == doctest::Approx(0.5));
    for (double v : grid.values) CHECK(v == doctest::Approx(grid.clean_error));
}

TEST_CASE("DC-threshold oracle concentrates sensitivity in the DC cell") {
    const int n = 8;
    std::vector<ImageTensor> images;
    std::vector<int> labels;
    make_dc_dataset(n, 8, 0.005, &images, &labels);

    HeatmapCfg cfg;
    cfg.v = default_perturbation_norm(n);  // DC shift 4/255 ~ 0.0157 > delta
    cfg.images_per_class = 5;
    cfg.seed = 1;
    const HeatmapGrid grid = sensitivity_heatmap(dc_oracle, images, labels, cfg);

    CHECK(grid.clean_error == doctest::Approx(0.0));
    double max_off_dc = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i || j) max_off_dc = std::max(max_off_dc, grid.at(i, j));
    CHECK(grid.at(0, 0) > max_off_dc);
    CHECK(grid.at(0, 0) >= 0.3);  // random signs flip roughly half the samples
    CHECK(max_off_dc <= grid.clean_error + 0.01);  // off-DC unaffected
}

TEST_CASE("heatmap is symmetric under the conjugate-frequency pairing") {
    const int n = 8;
    std::vector<ImageTensor> images;
    std::vector<int> labels;
    make_dc_dataset(n, 6, 0.004, &images, &labels);
    HeatmapCfg cfg;
    cfg.seed = 9;
    const HeatmapGrid grid = sensitivity_heatmap(dc_oracle, images, labels, cfg);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            CHECK(grid.at(i, j) == doctest::Approx(grid.at((n - i) % n, (n - j) % n)));
}

TEST_CASE("heatmap error rate is invariant to class relabeling") {
    const int n = 8;
    std::vector<ImageTensor> images;
    std::vector<int> labels;
    make_dc_dataset(n, 6, 0.005, &images, &labels);
    HeatmapCfg cfg;
    cfg.seed = 4;
    cfg.images_per_class = 6;  // full coverage: the sampled set matches exactly
    const HeatmapGrid a = sensitivity_heatmap(dc_oracle, images, labels, cfg);

    std::vector<int> flipped(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) flipped[i] = 1 - labels[i];
    const HeatmapGrid b = sensitivity_heatmap(
        [](const ImageTensor& img) { return 1 - dc_oracle(img); }, images, flipped, cfg);
    for (size_t i = 0; i < a.values.size(); ++i)
        CHECK(a.values[i] == doctest::Approx(b.values[i]));
}

TEST_CASE("heatmap rejects mismatched resolutions") {
    std::vector<ImageTensor> images = {ImageTensor::constant(8, 8, 1, 0.5f),
                                       ImageTensor::constant(16, 16, 1, 0.5f)};
    std::vector<int> labels = {0, 1};
    HeatmapCfg cfg;
    CHECK_THROWS_AS(sensitivity_heatmap(dc_oracle, images, labels, cfg),
                    std::invalid_argument);
}

TEST_CASE("probe trained on blurred inputs tolerates high frequencies better than low") {
    // Blob position is the class cue; training inputs are heavily blurred, so
    // the probe weights are smooth templates. The error induced by outer
    // (high-frequency) perturbations must not exceed the inner-disk error
    // by more than the margin, in each of 3 seeds.
    const int n = 16;
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        std::vector<ImageTensor> clean, blurred;
        std::vector<int> labels;
        Prng rng(seed);
        for (int i = 0; i < 40; ++i) {
            const int cls = i % 2;
            ImageTensor img = ImageTensor::zeros(n, n, 1);
            const double cx = cls == 0 ? 4.0 : 12.0;
            const double jitter = rng.uniform() * 2.0 - 1.0;
            for (int y = 0; y < n; ++y)
                for (int x = 0; x < n; ++x) {
                    const double d2 = (x - cx - jitter) * (x - cx - jitter) +
                                      (y - 8.0) * (y - 8.0);
                    img.at(y, x, 0) = static_cast<float>(0.35 + 0.3 * std::exp(-d2 / 18.0));
                }
            Prng crng = Prng::derive(seed, 5, static_cast<uint64_t>(i));
            blurred.push_back(augment::apply_corruption(
                img, crng, augment::make_spec(augment::CorruptionKind::kGaussianBlur, 5)));
            clean.push_back(std::move(img));
            labels.push_back(cls);
        }
        // probe on raw blurred pixels
        evalsuite::FeatureMatrix fm;
        fm.n = static_cast<int>(blurred.size());
        fm.dim = n * n;
        fm.labels = labels;
        for (const auto& img : blurred)
            fm.values.insert(fm.values.end(), img.data.begin(), img.data.end());
        evalsuite::ProbeCfg pcfg;
        pcfg.iters = 800;
        pcfg.batch = 20;
        pcfg.lr = 0.5;
        pcfg.seed = seed;
        const evalsuite::ProbeModel probe = evalsuite::train_probe(fm, pcfg);

        HeatmapCfg cfg;
        cfg.v = 1.5;
        cfg.images_per_class = 5;
        cfg.seed = seed;
        const HeatmapGrid grid = sensitivity_heatmap(
            [&](const ImageTensor& img) {
                std::vector<float> feat(img.data.begin(), img.data.end());
                return evalsuite::probe_predict(probe, feat.data());
            },
            clean, labels, cfg);

        double inner = 0.0, outer = 0.0;
        int inner_count = 0, outer_count = 0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double r = std::hypot(std::min(i, n - i), std::min(j, n - j));
                if (r <= n / 8.0) {
                    inner += grid.at(i, j);
                    ++inner_count;
                } else if (r >= 3.0 * n / 8.0) {
                    outer += grid.at(i, j);
                    ++outer_count;
                }
            }
        inner /= inner_count;
        outer /= outer_count;
        CHECK(outer <= inner + 0.05);
    }
}

TEST_CASE("heatmap CSV and PGM emission") {
    namespace fs = std::filesystem;
    const int n = 8;
    std::vector<ImageTensor> images;
    std::vector<int> labels;
    make_dc_dataset(n, 5, 0.005, &images, &labels);
    HeatmapCfg cfg;
    cfg.seed = 2;
    const HeatmapGrid grid = sensitivity_heatmap(dc_oracle, images, labels, cfg);

    const auto dir = fs::temp_directory_path() / "freqvit_tests";
    fs::create_directories(dir);
    const std::string csv = (dir / "heatmap.csv").string();
    const std::string pgm = (dir / "heatmap.pgm").string();
    const std::string sidecar = (dir / "heatmap.txt").string();
    write_heatmap_csv(csv, grid, 0xabcdull, 7);
    write_heatmap_pgm(pgm, sidecar, grid);

    std::ifstream fcsv(csv);
    std::string line;
    std::getline(fcsv, line);
    CHECK(line.find("config_hash=000000000000abcd") != std::string::npos);
    const ImageTensor rendered = load_image(pgm);
    CHECK(rendered.height == n);
    CHECK(rendered.channels == 1);
    std::ifstream fside(sidecar);
    std::string side((std::istreambuf_iterator<char>(fside)),
                     std::istreambuf_iterator<char>());
    CHECK(side.find("min_error=") != std::string::npos);
    CHECK(side.find("fftshifted") != std::string::npos);
}
