#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "freqvit/augment.hpp"
#include "freqvit/datagen.hpp"
#include "freqvit/evalsuite.hpp"
#include "freqvit/spectral.hpp"

using namespace freqvit;
using namespace freqvit::datagen;

namespace fs = std::filesystem;

namespace {

std::string temp_root(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "freqvit_tests" / name;
    fs::remove_all(dir);
    return dir.string();
}

evalsuite::FeatureMatrix pixels_as_features(const std::vector<ImageTensor>& images,
                                            const std::vector<int>& labels) {
    evalsuite::FeatureMatrix fm;
    fm.n = static_cast<int>(images.size());
    fm.dim = static_cast<int>(images[0].data.size());
    fm.labels = labels;
    for (const auto& img : images)
        fm.values.insert(fm.values.end(), img.data.begin(), img.data.end());
    return fm;
}

// Test-local heavy blur with periodic padding: a pure sinusoid is wiped out
// with no edge-replication leakage, which keeps this oracle independent of
// the production blur's border policy.
ImageTensor periodic_blur(const ImageTensor& img, double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i)
        sum += kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (auto& k : kernel) k /= sum;
    const int h = img.height, w = img.width, c = img.channels;
    ImageTensor tmp = ImageTensor::zeros(h, w, c), out = ImageTensor::zeros(h, w, c);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k)
                    acc += kernel[k + radius] * img.at(y, ((x + k) % w + w) % w, ch);
                tmp.at(y, x, ch) = static_cast<float>(acc);
            }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k)
                    acc += kernel[k + radius] * tmp.at(((y + k) % h + h) % h, x, ch);
                out.at(y, x, ch) = static_cast<float>(acc);
            }
    return out;
}

// train/val split rendered directly (no files) for the cue oracles
void render_split(const SynthCfg& cfg, int lane, std::vector<ImageTensor>* images,
                  std::vector<int>* labels, int per_class, bool blur) {
    for (int c = 0; c < cfg.classes; ++c)
        for (int i = 0; i < per_class; ++i) {
            ImageTensor img = render_synth_image(cfg, c, i, lane);
            if (blur) img = periodic_blur(img, 2.5);
            images->push_back(std::move(img));
            labels->push_back(c);
        }
}

double blurred_probe_val_accuracy(double cue_mix, uint64_t seed, bool blur) {
    SynthCfg cfg;
    cfg.classes = 4;
    cfg.resolution = 32;
    cfg.cue_mix = cue_mix;
    cfg.seed = seed;
    std::vector<ImageTensor> train_imgs, val_imgs;
    std::vector<int> train_labels, val_labels;
    render_split(cfg, 0, &train_imgs, &train_labels, 60, blur);
    render_split(cfg, 1, &val_imgs, &val_labels, 20, blur);

    evalsuite::ProbeCfg pcfg;
    pcfg.iters = 1500;
    pcfg.batch = 32;
    pcfg.lr = 0.3;
    pcfg.seed = seed;
    const auto probe = evalsuite::train_probe(pixels_as_features(train_imgs, train_labels), pcfg);
    return evalsuite::probe_accuracy(probe, pixels_as_features(val_imgs, val_labels));
}

}  // namespace

TEST_CASE("synthetic rendering is deterministic and in range") {
    SynthCfg cfg;
    const ImageTensor a = render_synth_image(cfg, 3, 17, 0);
    const ImageTensor b = render_synth_image(cfg, 3, 17, 0);
    CHECK(std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0);
    const ImageTensor c = render_synth_image(cfg, 3, 17, 1);  // different split lane
    CHECK(std::memcmp(a.data.data(), c.data.data(), a.data.size() * sizeof(float)) != 0);
    for (float v : a.data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    CHECK(a.channels == 3);
}

TEST_CASE("generate_synth writes both splits deterministically") {
    SynthCfg cfg;
    cfg.classes = 3;
    cfg.per_class_train = 4;
    cfg.per_class_val = 2;
    cfg.resolution = 16;
    cfg.seed = 123;

    const std::string root_a = temp_root("synth_a");
    const DatasetManifest train = generate_synth(cfg, root_a);
    CHECK(train.split == "train");
    CHECK(train.class_names.size() == 3);
    CHECK(train.total_files() == 12);
    CHECK(fs::exists(fs::path(root_a) / "train" / "class_000" / "0000.ppm"));
    CHECK(fs::exists(fs::path(root_a) / "val" / "class_002" / "0001.ppm"));
    CHECK(fs::exists(fs::path(root_a) / "train" / "manifest.txt"));

    const std::string root_b = temp_root("synth_b");
    generate_synth(cfg, root_b);
    CHECK(checksum_dir(root_a) == checksum_dir(root_b));

    SynthCfg other = cfg;
    other.seed = 124;
    const std::string root_c = temp_root("synth_c");
    generate_synth(other, root_c);
    CHECK(checksum_dir(root_a) != checksum_dir(root_c));
}

TEST_CASE("scan_dataset sorts classes and files and validates the layout") {
    const std::string root = temp_root("scan");
    fs::create_directories(fs::path(root) / "zebra");
    fs::create_directories(fs::path(root) / "apple");
    for (const char* cls : {"zebra", "apple"})
        for (const char* name : {"b.ppm", "a.ppm", "c.ppm"})
            save_image(ImageTensor::constant(4, 4, 3, 0.5f), (fs::path(root) / cls / name).string());

    const DatasetManifest m = scan_dataset(root);
    REQUIRE(m.class_names.size() == 2);
    CHECK(m.class_names[0] == "apple");
    CHECK(m.class_names[1] == "zebra");
    CHECK(m.total_files() == 6);
    CHECK(m.files[0][0].find("a.ppm") != std::string::npos);

    CHECK_THROWS_WITH_AS(scan_dataset(root + "_missing"), doctest::Contains("_missing"),
                         std::runtime_error);
    fs::create_directories(fs::path(root) / "empty_class");
    CHECK_THROWS_WITH_AS(scan_dataset(root), doctest::Contains("empty_class"),
                         std::runtime_error);
}

TEST_CASE("load_dataset preserves manifest order and labels") {
    SynthCfg cfg;
    cfg.classes = 2;
    cfg.per_class_train = 3;
    cfg.per_class_val = 0;
    cfg.resolution = 16;
    const std::string root = temp_root("load");
    const DatasetManifest train = generate_synth(cfg, root);
    const LoadedDataset ds = load_dataset(train);
    REQUIRE(ds.images.size() == 6);
    CHECK(ds.labels == std::vector<int>({0, 0, 0, 1, 1, 1}));
    CHECK(ds.images[0].height == 16);
}

TEST_CASE("raw-pixel probe recovers classes at cue_mix 0, 0.5, and 1") {
    for (double cue_mix : {0.0, 0.5, 1.0})
        for (uint64_t seed : {1ull, 2ull, 3ull}) {
            const double acc = blurred_probe_val_accuracy(cue_mix, seed, /*blur=*/false);
            INFO("cue_mix ", cue_mix, " seed ", seed, " acc ", acc);
            CHECK(acc > 0.95);
        }
}

TEST_CASE("heavy blur keeps low-cue classes separable but destroys high-cue ones") {
    // cue_mix = 1: only the blob cue, which survives blurring
    const double low_cue_acc = blurred_probe_val_accuracy(1.0, 5, /*blur=*/true);
    CHECK(low_cue_acc > 0.90);
    // cue_mix = 0: only the sinusoid cue, erased by the blur (chance = 0.25)
    const double high_cue_acc = blurred_probe_val_accuracy(0.0, 5, /*blur=*/true);
    CHECK(high_cue_acc < 0.45);
}

TEST_CASE("class-discriminative energy sits in the expected DFT band") {
    SynthCfg cfg;
    cfg.classes = 2;
    cfg.resolution = 32;
    cfg.noise_std = 0.0;

    auto class_mean_diff_energy = [&](double cue_mix, double r_lo, double r_hi) {
        cfg.cue_mix = cue_mix;
        spectral::RealGrid diff = spectral::RealGrid::zeros(32);
        const int per_class = 8;
        for (int c = 0; c < 2; ++c)
            for (int i = 0; i < per_class; ++i) {
                const ImageTensor img = render_synth_image(cfg, c, i, 0);
                for (int y = 0; y < 32; ++y)
                    for (int x = 0; x < 32; ++x)
                        diff.at(y, x) += (c == 0 ? 1.0 : -1.0) * img.at(y, x, 0) / per_class;
            }
        return spectral::band_energy(spectral::dft2(diff), r_lo, r_hi);
    };

    // low-frequency cue: inner disk dominates
    CHECK(class_mean_diff_energy(1.0, 0.0, 8.0) > 4.0 * class_mean_diff_energy(1.0, 8.0, 1e9));
    // high-frequency cue: outer annulus dominates
    CHECK(class_mean_diff_energy(0.0, 8.0, 1e9) > 4.0 * class_mean_diff_energy(0.0, 0.0, 8.0));
}

TEST_CASE("synth config validation") {
    SynthCfg cfg;
    cfg.classes = 1;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
    cfg = SynthCfg{};
    cfg.cue_mix = 1.5;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
    cfg = SynthCfg{};
    cfg.resolution = 4;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
}
