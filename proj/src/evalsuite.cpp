#include "freqvit/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "freqvit/threads.hpp"

namespace freqvit::evalsuite {

// ---------------------------------------------------------------------------
// FLOPs
// ---------------------------------------------------------------------------

int patch_tokens(const ssl::EncoderCfg& cfg, int resolution) {
    if (resolution % cfg.patch != 0)
        throw std::invalid_argument("patch_tokens: resolution not divisible by patch");
    const int g = resolution / cfg.patch;
    return g * g;
}

double flops_forward(const ssl::EncoderCfg& cfg, int resolution) {
    const double np = patch_tokens(cfg, resolution);
    const double n = np + 1.0;  // class token
    const double d = cfg.dim;
    const double block_macs = cfg.depth * (12.0 * n * d * d + 2.0 * n * n * d);
    const double embed_macs = np * cfg.patch * cfg.patch * cfg.channels * d;
    return 2.0 * (block_macs + embed_macs);
}

double train_flops_per_image(const ssl::EncoderCfg& cfg, const curriculum::StagePlan& plan,
                             int n_local_crops) {
    const double fg = flops_forward(cfg, plan.global_res);
    const double fl = n_local_crops > 0 ? flops_forward(cfg, plan.local_res) : 0.0;
    const double student = 3.0 * (2.0 * fg + n_local_crops * fl);  // fwd + 2x bwd
    const double teacher = 2.0 * fg;
    return student + teacher;
}

double schedule_flops(const curriculum::CurriculumConfig& ccfg, const ssl::EncoderCfg& ecfg,
                      bool baseline, double images_per_epoch) {
    double total = 0.0;
    for (int e = 0; e < ccfg.total_epochs; ++e) {
        curriculum::StagePlan plan;
        if (baseline) {
            plan.stage = curriculum::Stage::kFullRes;
            plan.global_res = ccfg.stage2_global_res;
            plan.local_res = ccfg.stage2_local_res;
            plan.batch_size = ccfg.batch_size;
        } else {
            plan = curriculum::plan_for_epoch(ccfg, e);
        }
        total += images_per_epoch * train_flops_per_image(ecfg, plan, ccfg.n_local_crops);
    }
    return total;
}

FlopsPreset flops_preset(const std::string& name) {
    if (name == "vitb16") {
        FlopsPreset preset;
        preset.encoder.patch = 16;
        preset.encoder.dim = 768;
        preset.encoder.depth = 12;
        preset.encoder.heads = 12;
        preset.encoder.prototypes = 65536;
        preset.encoder.head_hidden = 2048;
        preset.encoder.channels = 3;
        preset.curriculum.total_epochs = 200;
        preset.curriculum.stage1_fraction = 0.75;  // 150 low-res + 50 full-res epochs
        preset.curriculum.stage1_global_res = 112;
        preset.curriculum.stage1_local_res = 48;
        preset.curriculum.stage2_global_res = 224;
        preset.curriculum.stage2_local_res = 96;
        preset.curriculum.n_local_crops = 8;
        preset.baseline_epochs = 250;
        return preset;
    }
    throw ConfigError("unknown flops preset: " + name);
}

// ---------------------------------------------------------------------------
// Features and probe
// ---------------------------------------------------------------------------

FeatureMatrix extract_features(const ssl::EncoderParams<float>& encoder,
                               const std::vector<ImageTensor>& images,
                               const std::vector<int>& labels, int threads) {
    if (images.size() != labels.size())
        throw std::invalid_argument("extract_features: image/label count mismatch");
    FeatureMatrix fm;
    fm.n = static_cast<int>(images.size());
    fm.dim = encoder.cfg.dim;
    fm.values.assign(static_cast<size_t>(fm.n) * fm.dim, 0.0f);
    fm.labels = labels;

    parallel_for(images.size(), threads, [&](size_t i) {
        ssl::EncoderActs<float> acts;
        ssl::encoder_forward(encoder, images[i], acts);
        std::copy(acts.feature.begin(), acts.feature.end(),
                  fm.values.begin() + static_cast<size_t>(i) * fm.dim);
    });
    return fm;
}

double probe_loss_grad(const ProbeModel& model, const FeatureMatrix& features,
                       const std::vector<size_t>& rows, std::vector<double>* dweight,
                       std::vector<double>* dbias) {
    const int C = model.classes;
    const int D = model.dim;
    if (rows.empty()) throw std::invalid_argument("probe_loss_grad: empty batch");
    if (dweight) dweight->assign(static_cast<size_t>(C) * D, 0.0);
    if (dbias) dbias->assign(C, 0.0);

    std::vector<double> logits(C);
    double loss = 0.0;
    const double invb = 1.0 / static_cast<double>(rows.size());
    for (size_t r : rows) {
        const float* x = features.row(static_cast<int>(r));
        const int y = features.labels[r];
        for (int c = 0; c < C; ++c) {
            double acc = model.bias[c];
            const double* w = model.weight.data() + static_cast<size_t>(c) * D;
            for (int d = 0; d < D; ++d) acc += w[d] * x[d];
            logits[c] = acc;
        }
        double mx = logits[0];
        for (int c = 1; c < C; ++c) mx = std::max(mx, logits[c]);
        double sum = 0.0;
        for (int c = 0; c < C; ++c) sum += std::exp(logits[c] - mx);
        const double lse = mx + std::log(sum);
        loss += (lse - logits[y]) * invb;
        if (dweight || dbias) {
            for (int c = 0; c < C; ++c) {
                const double p = std::exp(logits[c] - lse);
                const double g = (p - (c == y ? 1.0 : 0.0)) * invb;
                if (dbias) (*dbias)[c] += g;
                if (dweight) {
                    double* dw = dweight->data() + static_cast<size_t>(c) * D;
                    for (int d = 0; d < D; ++d) dw[d] += g * x[d];
                }
            }
        }
    }
    return loss;
}

ProbeModel train_probe(const FeatureMatrix& features, const ProbeCfg& cfg) {
    if (features.n < 1) throw std::invalid_argument("train_probe: empty features");
    int classes = 0;
    for (int l : features.labels) classes = std::max(classes, l + 1);
    if (classes < 2) throw std::invalid_argument("train_probe: need >= 2 classes");

    ProbeModel model;
    model.classes = classes;
    model.dim = features.dim;
    model.weight.assign(static_cast<size_t>(classes) * features.dim, 0.0);
    model.bias.assign(classes, 0.0);

    Prng rng(cfg.seed, 0x50524f42ull);  // probe lane
    std::vector<size_t> batch(cfg.batch);
    std::vector<double> dw, db;
    for (int it = 0; it < cfg.iters; ++it) {
        for (int b = 0; b < cfg.batch; ++b)
            batch[b] = rng.uniform_int(0, static_cast<uint64_t>(features.n - 1));
        probe_loss_grad(model, features, batch, &dw, &db);
        const double lr =
            cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * it / std::max(1, cfg.iters)));
        for (size_t i = 0; i < model.weight.size(); ++i) model.weight[i] -= lr * dw[i];
        for (int c = 0; c < classes; ++c) model.bias[c] -= lr * db[c];
    }
    return model;
}

int probe_predict(const ProbeModel& model, const float* feature) {
    int best = 0;
    double best_score = -1e300;
    for (int c = 0; c < model.classes; ++c) {
        double acc = model.bias[c];
        const double* w = model.weight.data() + static_cast<size_t>(c) * model.dim;
        for (int d = 0; d < model.dim; ++d) acc += w[d] * feature[d];
        if (acc > best_score) {
            best_score = acc;
            best = c;
        }
    }
    return best;
}

double probe_accuracy(const ProbeModel& model, const FeatureMatrix& features) {
    if (features.n == 0) return 0.0;
    int correct = 0;
    for (int i = 0; i < features.n; ++i)
        if (probe_predict(model, features.row(i)) == features.labels[i]) ++correct;
    return static_cast<double>(correct) / features.n;
}

void save_probe(const std::string& path, const ProbeModel& model) {
    // weight rows with the bias appended as a final column
    TensorData t;
    t.dims = {static_cast<uint32_t>(model.classes), static_cast<uint32_t>(model.dim + 1)};
    t.values.reserve(static_cast<size_t>(model.classes) * (model.dim + 1));
    for (int c = 0; c < model.classes; ++c) {
        for (int d = 0; d < model.dim; ++d)
            t.values.push_back(static_cast<float>(model.weight[static_cast<size_t>(c) * model.dim + d]));
        t.values.push_back(static_cast<float>(model.bias[c]));
    }
    write_tensor_file(path, t);
}

ProbeModel load_probe(const std::string& path) {
    const TensorData t = read_tensor_file(path);
    if (t.dims.size() != 2 || t.dims[1] < 2)
        throw ParseError("probe file has unexpected shape: " + path);
    ProbeModel model;
    model.classes = static_cast<int>(t.dims[0]);
    model.dim = static_cast<int>(t.dims[1]) - 1;
    model.weight.resize(static_cast<size_t>(model.classes) * model.dim);
    model.bias.resize(model.classes);
    for (int c = 0; c < model.classes; ++c) {
        for (int d = 0; d < model.dim; ++d)
            model.weight[static_cast<size_t>(c) * model.dim + d] =
                t.values[static_cast<size_t>(c) * (model.dim + 1) + d];
        model.bias[c] = t.values[static_cast<size_t>(c) * (model.dim + 1) + model.dim];
    }
    return model;
}

// ---------------------------------------------------------------------------
// Corruption benchmark
// ---------------------------------------------------------------------------

double group_accuracy(const BenchmarkReport& report, augment::FrequencyGroup group) {
    double sum = 0.0;
    int count = 0;
    for (const auto& cell : report.cells)
        if (cell.spec.group == group) {
            sum += cell.accuracy;
            ++count;
        }
    if (count == 0) throw std::invalid_argument("group_accuracy: group absent from report");
    return sum / count;
}

BenchmarkReport corruption_benchmark(const ssl::EncoderParams<float>& encoder,
                                     const ProbeModel& probe,
                                     const std::vector<ImageTensor>& images,
                                     const std::vector<int>& labels,
                                     const std::vector<augment::CorruptionSpec>& catalog,
                                     uint64_t seed, int threads) {
    if (images.empty()) throw std::invalid_argument("corruption_benchmark: empty dataset");
    BenchmarkReport report;

    const FeatureMatrix clean = extract_features(encoder, images, labels, threads);
    report.clean_accuracy = probe_accuracy(probe, clean);

    std::vector<ImageTensor> corrupted(images.size());
    for (size_t si = 0; si < catalog.size(); ++si) {
        const augment::CorruptionSpec& spec = catalog[si];
        parallel_for(images.size(), threads, [&](size_t i) {
            Prng rng = Prng::derive(seed, si, i);
            corrupted[i] = augment::apply_corruption(images[i], rng, spec);
        });
        const FeatureMatrix fm = extract_features(encoder, corrupted, labels, threads);
        BenchmarkCell cell;
        cell.spec = spec;
        cell.accuracy = probe_accuracy(probe, fm);
        report.cells.push_back(cell);
    }

    double sum = 0.0;
    for (const auto& cell : report.cells) sum += cell.accuracy;
    report.overall_accuracy = report.cells.empty() ? 0.0 : sum / report.cells.size();
    return report;
}

std::string report_csv(const BenchmarkReport& report, uint64_t config_hash, uint64_t seed) {
    std::ostringstream out;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(config_hash));
    out << "# config_hash=" << buf << " seed=" << seed << "\n";
    out << "# probe_iters=" << report.probe_iters << " probe_batch=" << report.probe_batch
        << "\n";
    out << "kind,severity,group,accuracy,error\n";
    auto emit = [&](const std::string& kind, const std::string& severity,
                    const std::string& group, double acc) {
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f", acc, 1.0 - acc);
        out << kind << "," << severity << "," << group << "," << buf << "\n";
    };
    for (const auto& cell : report.cells)
        emit(augment::kind_name(cell.spec.kind), std::to_string(cell.spec.severity),
             augment::group_name(cell.spec.group), cell.accuracy);
    emit("summary_clean", "", "", report.clean_accuracy);
    emit("summary_overall", "", "", report.overall_accuracy);
    for (auto group : {augment::FrequencyGroup::kLow, augment::FrequencyGroup::kMid,
                       augment::FrequencyGroup::kHigh, augment::FrequencyGroup::kHybrid}) {
        bool present = false;
        for (const auto& cell : report.cells)
            if (cell.spec.group == group) present = true;
        if (present)
            emit("summary_group", "", augment::group_name(group),
                 group_accuracy(report, group));
    }
    return out.str();
}

}  // namespace freqvit::evalsuite
