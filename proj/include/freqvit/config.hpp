// Plain-text `key = value` run configuration: one flat schema spanning the
// curriculum, encoder, loss, synthetic-data, and evaluation settings. Unknown
// keys are errors; the canonical serialization feeds the config hash embedded
// in every output artifact.
#pragma once

#include "freqvit/curriculum.hpp"
#include "freqvit/datagen.hpp"
#include "freqvit/train.hpp"

namespace freqvit {

struct EvalCfg {
    int probe_iters = 12500;
    int probe_batch = 128;
    double probe_lr = 0.1;
    double heatmap_v = -1.0;  // < 0 selects the default norm for the resolution
    int heatmap_images_per_class = 5;
};

struct RunConfig {
    uint64_t seed = 1;
    datagen::SynthCfg synth;
    ssl::EncoderCfg encoder;
    curriculum::CurriculumConfig curriculum;
    ssl::LossCfg loss;
    EvalCfg eval;
};

// Parsed `key = value` lines; '#' starts a comment, blank lines are skipped,
// duplicate keys are errors.
std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text);

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Canonical serialization (fixed key order, normalized values); reparsing it
// yields an identical config.
std::string serialize_run_config(const RunConfig& cfg);
uint64_t config_hash(const RunConfig& cfg);

void validate(const RunConfig& cfg);

}  // namespace freqvit
