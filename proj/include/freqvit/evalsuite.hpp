// Frozen-backbone linear probing, the corruption benchmark with
// frequency-group aggregation, and the FLOPs cost model.
#pragma once

#include "freqvit/augment.hpp"
#include "freqvit/curriculum.hpp"
#include "freqvit/encoder.hpp"

namespace freqvit::evalsuite {

// ---------------------------------------------------------------------------
// FLOPs estimator. Convention (documented, frozen): one multiply-accumulate
// counts as 2 FLOPs; per block, attention QKV+proj cost 4*n*d^2 MACs,
// attention maps 2*n^2*d, MLP 8*n*d^2 (hidden ratio 4); patch embedding
// costs n_patches * p^2 * c * d. The projection head is excluded. Backward
// passes count twice the forward cost.
// ---------------------------------------------------------------------------

int patch_tokens(const ssl::EncoderCfg& cfg, int resolution);
double flops_forward(const ssl::EncoderCfg& cfg, int resolution);

// One training step on one image under a stage plan: student forward+backward
// (3x forward) on 2 global + n_local local crops, teacher forward on the two
// global crops.
double train_flops_per_image(const ssl::EncoderCfg& cfg, const curriculum::StagePlan& plan,
                             int n_local_crops);

// Sum of per-epoch training cost over the full StagePlan sequence, in
// per-image units unless images_per_epoch is given. baseline uses the stage-2
// resolutions for every epoch.
double schedule_flops(const curriculum::CurriculumConfig& ccfg, const ssl::EncoderCfg& ecfg,
                      bool baseline = false, double images_per_epoch = 1.0);

struct FlopsPreset {
    ssl::EncoderCfg encoder;
    curriculum::CurriculumConfig curriculum;
    int baseline_epochs = 0;
};
// "vitb16": ViT-B/16, 112->224 curriculum (150 + 50 epochs) vs 250-epoch baseline.
FlopsPreset flops_preset(const std::string& name);

// ---------------------------------------------------------------------------
// Feature extraction and the linear probe
// ---------------------------------------------------------------------------

struct FeatureMatrix {
    int n = 0;
    int dim = 0;
    std::vector<float> values;  // n x dim row-major
    std::vector<int> labels;

    const float* row(int i) const { return values.data() + static_cast<size_t>(i) * dim; }
};

// Class-token features in dataset order; no gradients are involved.
FeatureMatrix extract_features(const ssl::EncoderParams<float>& encoder,
                               const std::vector<ImageTensor>& images,
                               const std::vector<int>& labels, int threads = 1);

struct ProbeModel {
    int classes = 0;
    int dim = 0;
    std::vector<double> weight;  // classes x dim
    std::vector<double> bias;    // classes
};

struct ProbeCfg {
    int iters = 12500;
    int batch = 128;
    double lr = 0.1;
    uint64_t seed = 0;
};

// Mean cross-entropy over the given rows; accumulates analytic gradients when
// requested. Exposed for the finite-difference oracle.
double probe_loss_grad(const ProbeModel& model, const FeatureMatrix& features,
                       const std::vector<size_t>& rows, std::vector<double>* dweight,
                       std::vector<double>* dbias);

// Multinomial logistic regression by mini-batch SGD with cosine LR decay.
ProbeModel train_probe(const FeatureMatrix& features, const ProbeCfg& cfg);

int probe_predict(const ProbeModel& model, const float* feature);
double probe_accuracy(const ProbeModel& model, const FeatureMatrix& features);

void save_probe(const std::string& path, const ProbeModel& model);
ProbeModel load_probe(const std::string& path);

// ---------------------------------------------------------------------------
// Corruption benchmark
// ---------------------------------------------------------------------------

struct BenchmarkCell {
    augment::CorruptionSpec spec;
    double accuracy = 0.0;
};

struct BenchmarkReport {
    std::vector<BenchmarkCell> cells;
    double clean_accuracy = 0.0;
    double overall_accuracy = 0.0;  // mean over all cells
    int probe_iters = 0;            // metadata
    int probe_batch = 0;
};

double group_accuracy(const BenchmarkReport& report, augment::FrequencyGroup group);

// Corrupts every evaluation image for each catalog entry, extracts features,
// classifies with the (clean-trained) probe, and aggregates accuracies.
BenchmarkReport corruption_benchmark(const ssl::EncoderParams<float>& encoder,
                                     const ProbeModel& probe,
                                     const std::vector<ImageTensor>& images,
                                     const std::vector<int>& labels,
                                     const std::vector<augment::CorruptionSpec>& catalog,
                                     uint64_t seed, int threads = 1);

// CSV: per-cell rows (kind, severity, group, accuracy, error) followed by a
// summary block with group means, overall, and clean accuracy.
std::string report_csv(const BenchmarkReport& report, uint64_t config_hash, uint64_t seed);

}  // namespace freqvit::evalsuite
