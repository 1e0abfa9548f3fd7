#include "freqvit/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

namespace freqvit::datagen {

namespace fs = std::filesystem;

void validate(const SynthCfg& cfg) {
    if (cfg.classes < 2) throw ConfigError("classes must be >= 2");
    if (cfg.per_class_train < 1) throw ConfigError("per_class_train must be >= 1");
    if (cfg.per_class_val < 0) throw ConfigError("per_class_val must be >= 0");
    if (cfg.resolution < 8) throw ConfigError("resolution must be >= 8");
    if (cfg.cue_mix < 0.0 || cfg.cue_mix > 1.0) throw ConfigError("cue_mix must be in [0, 1]");
    if (cfg.noise_std < 0.0) throw ConfigError("synth_noise_std must be >= 0");
}

// Class cue geometry: the low-frequency cue is a Gaussian blob whose center
// sits on a ring at a class-specific angle (with small per-image jitter); the
// high-frequency cue is an oriented sinusoid whose wave vector is snapped to
// the integer frequency lattice, so the texture is exactly periodic on the
// image torus and occupies exactly one conjugate DFT bin pair. Wave-vector
// radii sit above the Nyquist limit of a 2x downsample, so heavy blurring or
// stage-1 resolution erases the texture cue.
ImageTensor render_synth_image(const SynthCfg& cfg, int cls, int index, int split_lane) {
    const int res = cfg.resolution;
    const uint64_t id = static_cast<uint64_t>(cls) * 0x100000ull + static_cast<uint64_t>(index);
    Prng rng = Prng::derive(cfg.seed, static_cast<uint64_t>(split_lane), id);

    const double bshift = (rng.uniform() - 0.5) * 0.08;
    const double jx = (rng.uniform() - 0.5) * 4.0;
    const double jy = (rng.uniform() - 0.5) * 4.0;

    const double angle = 2.0 * std::numbers::pi * cls / cfg.classes;
    const double cx = res / 2.0 + 0.30 * res * std::cos(angle) + jx;
    const double cy = res / 2.0 + 0.30 * res * std::sin(angle) + jy;
    const double sigma = res * (0.11 + 0.015 * (cls % 3));

    const double theta = std::numbers::pi * cls / cfg.classes + 0.35;
    const double radius = (0.31 + 0.03 * (cls % 4)) * res;  // cycles per image
    int kx = static_cast<int>(std::lround(radius * std::cos(theta)));
    int ky = static_cast<int>(std::lround(radius * std::sin(theta)));
    if (kx == 0 && ky == 0) kx = 1;
    const double phase = 2.0 * std::numbers::pi * cls / cfg.classes;

    ImageTensor img = ImageTensor::zeros(res, res, 3);
    for (int y = 0; y < res; ++y) {
        for (int x = 0; x < res; ++x) {
            const double dx = x - cx, dy = y - cy;
            const double blob = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            const double tex = std::sin(
                2.0 * std::numbers::pi * (kx * double(x) + ky * double(y)) / res + phase);
            double v = 0.5 - 0.10 * cfg.cue_mix + cfg.cue_mix * 0.45 * blob +
                       (1.0 - cfg.cue_mix) * 0.22 * tex + bshift +
                       cfg.noise_std * rng.gaussian();
            v = std::clamp(v, 0.0, 1.0);
            for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = static_cast<float>(v);
        }
    }
    return img;
}

namespace {

std::string class_dir_name(int cls) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "class_%03d", cls);
    return buf;
}

std::string image_file_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d.ppm", index);
    return buf;
}

DatasetManifest write_split(const SynthCfg& cfg, const std::string& root,
                            const std::string& split, int split_lane, int per_class) {
    const fs::path split_root = fs::path(root) / split;
    DatasetManifest manifest;
    manifest.root = split_root.string();
    manifest.split = split;

    std::error_code ec;
    fs::create_directories(split_root, ec);
    if (ec) throw std::runtime_error("unwritable root: " + split_root.string());

    std::ofstream cache(split_root / "manifest.txt");
    if (!cache) throw std::runtime_error("unwritable root: " + split_root.string());
    cache << "split=" << split << "\nclasses=" << cfg.classes << "\nper_class=" << per_class
          << "\nresolution=" << cfg.resolution << "\nseed=" << cfg.seed << "\n";

    for (int c = 0; c < cfg.classes; ++c) {
        const fs::path cls_dir = split_root / class_dir_name(c);
        fs::create_directories(cls_dir, ec);
        if (ec) throw std::runtime_error("unwritable root: " + cls_dir.string());
        manifest.class_names.push_back(class_dir_name(c));
        manifest.files.emplace_back();
        for (int i = 0; i < per_class; ++i) {
            const fs::path file = cls_dir / image_file_name(i);
            save_image(render_synth_image(cfg, c, i, split_lane), file.string());
            manifest.files.back().push_back(file.string());
            cache << class_dir_name(c) << "/" << image_file_name(i) << "\n";
        }
    }
    return manifest;
}

}  // namespace

DatasetManifest generate_synth(const SynthCfg& cfg, const std::string& root) {
    validate(cfg);
    DatasetManifest train = write_split(cfg, root, "train", 0, cfg.per_class_train);
    if (cfg.per_class_val > 0) write_split(cfg, root, "val", 1, cfg.per_class_val);
    return train;
}

DatasetManifest scan_dataset(const std::string& root) {
    if (!fs::is_directory(root))
        throw std::runtime_error("dataset root missing: " + root);

    DatasetManifest manifest;
    manifest.root = root;
    manifest.split = fs::path(root).filename().string();

    std::vector<std::string> class_names;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory()) class_names.push_back(entry.path().filename().string());
    std::sort(class_names.begin(), class_names.end());
    if (class_names.empty())
        throw std::runtime_error("dataset root has no class directories: " + root);

    for (const auto& name : class_names) {
        std::vector<std::string> files;
        for (const auto& entry : fs::directory_iterator(fs::path(root) / name)) {
            if (!entry.is_regular_file()) continue;
            const std::string ext = entry.path().extension().string();
            if (ext == ".ppm" || ext == ".pgm") files.push_back(entry.path().string());
        }
        std::sort(files.begin(), files.end());
        if (files.empty())
            throw std::runtime_error("empty class directory: " +
                                     (fs::path(root) / name).string());
        manifest.class_names.push_back(name);
        manifest.files.push_back(std::move(files));
    }
    return manifest;
}

LoadedDataset load_dataset(const DatasetManifest& manifest) {
    LoadedDataset ds;
    ds.class_names = manifest.class_names;
    for (size_t c = 0; c < manifest.files.size(); ++c)
        for (const auto& path : manifest.files[c]) {
            ds.images.push_back(load_image(path));
            ds.labels.push_back(static_cast<int>(c));
        }
    return ds;
}

}  // namespace freqvit::datagen
