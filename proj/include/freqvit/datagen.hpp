// Deterministic synthetic dataset with per-class low-frequency (Gaussian
// blob) and high-frequency (oriented sinusoid) cues, plus folder-layout
// dataset ingestion.
#pragma once

#include "freqvit/core.hpp"

namespace freqvit::datagen {

struct SynthCfg {
    int classes = 10;
    int per_class_train = 100;
    int per_class_val = 20;
    int resolution = 32;
    double cue_mix = 0.5;  // 1 = low-frequency cue only, 0 = high-frequency only
    double noise_std = 0.02;
    uint64_t seed = 1;
};

void validate(const SynthCfg& cfg);

struct DatasetManifest {
    std::string root;  // split directory holding <class>/<idx>.ppm
    std::string split; // "train" or "val"
    std::vector<std::string> class_names;
    std::vector<std::vector<std::string>> files;  // per class, absolute paths, sorted

    size_t total_files() const {
        size_t n = 0;
        for (const auto& f : files) n += f.size();
        return n;
    }
};

// Renders one synthetic image; exposed so tests can probe cue geometry.
ImageTensor render_synth_image(const SynthCfg& cfg, int cls, int index, int split_lane);

// Writes root/train/<class>/<idx>.ppm and root/val/<class>/<idx>.ppm plus a
// manifest.txt per split; returns the train manifest. Fully determined by
// cfg.seed.
DatasetManifest generate_synth(const SynthCfg& cfg, const std::string& root);

// Scans a root/<class>/* layout; class names and file lists are sorted
// lexicographically (byte order, locale independent).
DatasetManifest scan_dataset(const std::string& root);

struct LoadedDataset {
    std::vector<ImageTensor> images;
    std::vector<int> labels;
    std::vector<std::string> class_names;
};

LoadedDataset load_dataset(const DatasetManifest& manifest);

}  // namespace freqvit::datagen
