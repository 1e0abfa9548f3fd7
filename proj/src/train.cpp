#include "freqvit/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "freqvit/evalsuite.hpp"
#include "freqvit/threads.hpp"

namespace freqvit::ssl {

namespace fs = std::filesystem;

namespace {

constexpr uint64_t kShuffleLane = 0xfffffffeull;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
// Gradient accumulation uses a fixed number of serially-reduced buffers so
// results do not depend on the worker count.
constexpr int kGradGroups = 8;

std::vector<size_t> shuffled_order(size_t n, uint64_t seed, int epoch) {
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    Prng rng = Prng::derive(seed, static_cast<uint64_t>(epoch), kShuffleLane);
    for (size_t i = n; i > 1; --i) {
        const size_t j = rng.uniform_int(0, i - 1);
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

// Accumulates softmax((logits - center) / tau) into acc (collapse metric:
// the entropy of the batch-mean teacher distribution measures prototype
// usage; per-view sharpness is expected, marginal concentration is collapse).
void accumulate_teacher_probs(const std::vector<float>& logits,
                              const std::vector<float>& center, double tau,
                              std::vector<double>& acc) {
    const size_t K = logits.size();
    std::vector<double> z(K);
    double mx = -1e300;
    for (size_t k = 0; k < K; ++k) {
        z[k] = (double(logits[k]) - double(center[k])) / tau;
        mx = std::max(mx, z[k]);
    }
    double sum = 0.0;
    for (size_t k = 0; k < K; ++k) {
        z[k] = std::exp(z[k] - mx);
        sum += z[k];
    }
    for (size_t k = 0; k < K; ++k) acc[k] += z[k] / sum;
}

double normalized_entropy(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double ent = 0.0;
    for (double w : weights) {
        if (w <= 0.0) continue;
        const double p = w / total;
        ent -= p * std::log(p);
    }
    return ent;
}

void accumulate_params(EncoderParams<float>& into, const EncoderParams<float>& from) {
    auto dst = param_refs(into);
    auto src = param_refs(const_cast<EncoderParams<float>&>(from));
    for (size_t i = 0; i < dst.size(); ++i) {
        auto& dv = dst[i].tensor->v;
        const auto& sv = src[i].tensor->v;
        for (size_t j = 0; j < dv.size(); ++j) dv[j] += sv[j];
    }
}

}  // namespace

TrainState make_train_state(const EncoderCfg& cfg, int resolution, uint64_t seed) {
    TrainState st;
    st.student = init_encoder_params<float>(cfg, resolution, seed);
    st.teacher = st.student;
    st.adam_m = make_encoder_params<float>(cfg, resolution);
    st.adam_v = make_encoder_params<float>(cfg, resolution);
    st.center.assign(cfg.prototypes, 0.0f);
    return st;
}

std::string metrics_to_csv(const std::vector<TrainMetricsRow>& rows, uint64_t config_hash,
                           uint64_t seed) {
    std::ostringstream out;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(config_hash));
    out << "# config_hash=" << buf << " seed=" << seed << "\n";
    out << "epoch,stage,loss,lr,tokens,cum_flops\n";
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%s,%.8f,%.8g,%lld,%.8e", r.epoch,
                      r.stage == curriculum::Stage::kLowFreq ? "low_freq" : "full_res", r.loss,
                      r.lr, static_cast<long long>(r.tokens), r.cum_flops);
        out << buf << "\n";
    }
    return out.str();
}

TrainResult train_run(const std::vector<ImageTensor>& train_images,
                      const curriculum::CurriculumConfig& ccfg, const EncoderCfg& ecfg,
                      const LossCfg& lcfg, uint64_t seed, const TrainOptions& opts) {
    validate(ecfg);
    curriculum::validate(ccfg);
    validate(lcfg);
    if (train_images.empty()) throw std::invalid_argument("train_run: empty dataset");
    for (const auto& img : train_images)
        if (img.channels != ecfg.channels)
            throw std::invalid_argument("train_run: image channels do not match encoder");
    for (int res : {ccfg.stage1_global_res, ccfg.stage1_local_res, ccfg.stage2_global_res,
                    ccfg.stage2_local_res})
        if (res % ecfg.patch != 0)
            throw ConfigError("train_run: stage resolution " + std::to_string(res) +
                              " not divisible by patch");

    const size_t N = train_images.size();
    const int boundary = curriculum::stage_boundary(ccfg);
    const int init_res = opts.baseline ? ccfg.stage2_global_res : ccfg.stage1_global_res;
    TrainState st = make_train_state(ecfg, init_res, seed);

    // Baseline runs keep one schedule over all epochs.
    curriculum::CurriculumConfig lr_cfg = ccfg;
    if (opts.baseline) lr_cfg.reset_lr_schedule_on_transition = false;

    auto plan_at = [&](int epoch) {
        curriculum::StagePlan plan;
        if (opts.baseline) {
            plan.stage = curriculum::Stage::kFullRes;
            plan.global_res = ccfg.stage2_global_res;
            plan.local_res = ccfg.stage2_local_res;
            plan.gp_active = false;
            plan.batch_size = ccfg.batch_size;
            plan.lr_multiplier = 1.0;
        } else {
            plan = curriculum::plan_for_epoch(ccfg, epoch);
        }
        return plan;
    };

    int64_t total_steps = 0;
    for (int e = 0; e < ccfg.total_epochs; ++e) {
        const int b = plan_at(e).batch_size;
        if (static_cast<size_t>(b) > N)
            throw ConfigError("train_run: batch_size exceeds dataset size");
        total_steps += static_cast<int64_t>(N / b);
    }

    TrainResult result;
    double cum_flops = 0.0;
    int64_t global_step = 0;
    int64_t boundary_step = -1;

    const int V = 2 + ccfg.n_local_crops;  // student views per image

    for (int e = 0; e < ccfg.total_epochs; ++e) {
        st.epoch = e;
        if (!opts.baseline && !st.transition_done && boundary > 0 &&
            boundary < ccfg.total_epochs && e == boundary) {
            curriculum::on_stage_transition(st, ccfg);
            boundary_step = global_step;
        }
        const curriculum::StagePlan plan = plan_at(e);
        const int B = plan.batch_size;
        const int steps = static_cast<int>(N / B);
        const auto order = shuffled_order(N, seed, e);

        imaging::CropCfg crop_cfg;
        crop_cfg.n_local = ccfg.n_local_crops;
        crop_cfg.global_out = plan.global_res;
        crop_cfg.local_out = plan.local_res;
        crop_cfg.global_min_scale = ccfg.global_crop_min_scale;
        crop_cfg.global_max_scale = ccfg.global_crop_max_scale;
        crop_cfg.local_min_scale = ccfg.local_crop_min_scale;
        crop_cfg.local_max_scale = ccfg.local_crop_max_scale;

        double epoch_loss = 0.0;
        double epoch_entropy = 0.0;

        for (int s = 0; s < steps; ++s) {
            // --- view preparation, one derived stream per image ---
            std::vector<std::vector<ImageTensor>> teacher_views(B);
            std::vector<std::vector<ImageTensor>> student_views(B);
            parallel_for(static_cast<size_t>(B), opts.threads, [&](size_t bi) {
                const size_t img_id = order[static_cast<size_t>(s) * B + bi];
                Prng rng = Prng::derive(seed, static_cast<uint64_t>(e), img_id);
                imaging::MultiCrop mc =
                    imaging::global_local_crops(rng, train_images[img_id], crop_cfg);
                teacher_views[bi] = mc.globals;
                auto& sv = student_views[bi];
                sv = std::move(mc.globals);
                for (auto& l : mc.locals) sv.push_back(std::move(l));
                if (plan.gp_active) {
                    const int patch_until = ccfg.gp_globals_only ? 2 : static_cast<int>(sv.size());
                    for (int j = 0; j < patch_until; ++j)
                        sv[j] = augment::apply_gaussian_patch(sv[j], rng, ccfg.gp_cfg);
                }
            });

            // --- teacher forwards (logits only) ---
            std::vector<std::vector<float>> t_logits(static_cast<size_t>(B) * 2);
            parallel_for(t_logits.size(), opts.threads, [&](size_t slot) {
                EncoderActs<float> acts;
                encoder_forward(st.teacher, teacher_views[slot / 2][slot % 2], acts);
                t_logits[slot] = std::move(acts.logits);
            });

            // --- student forwards (activations kept for backward) ---
            const size_t S = static_cast<size_t>(B) * V;
            std::vector<EncoderActs<float>> s_acts(S);
            parallel_for(S, opts.threads, [&](size_t slot) {
                encoder_forward(st.student, student_views[slot / V][slot % V], s_acts[slot]);
            });

            // --- loss and per-view logit gradients ---
            std::vector<std::vector<float>> dlogits(S);
            double step_loss = 0.0;
            std::vector<double> teacher_marginal(ecfg.prototypes, 0.0);
            const float inv_b = 1.0f / static_cast<float>(B);
            for (int bi = 0; bi < B; ++bi) {
                std::vector<std::vector<float>> tl = {t_logits[2 * bi], t_logits[2 * bi + 1]};
                std::vector<std::vector<float>> sl(V);
                for (int j = 0; j < V; ++j) sl[j] = s_acts[bi * V + j].logits;
                std::vector<std::vector<float>> ds;
                step_loss += distill_loss(tl, sl, st.center, lcfg, &ds) / B;
                for (int j = 0; j < V; ++j) {
                    for (auto& g : ds[j]) g *= inv_b;
                    dlogits[bi * V + j] = std::move(ds[j]);
                }
                accumulate_teacher_probs(tl[0], st.center, lcfg.teacher_temp, teacher_marginal);
                accumulate_teacher_probs(tl[1], st.center, lcfg.teacher_temp, teacher_marginal);
            }
            const double step_entropy = normalized_entropy(teacher_marginal);

            // --- backward into a fixed number of group buffers ---
            std::vector<EncoderParams<float>> group_grads;
            group_grads.reserve(kGradGroups);
            for (int g = 0; g < kGradGroups; ++g)
                group_grads.push_back(
                    make_encoder_params<float>(ecfg, st.student.pos_grid * ecfg.patch));
            parallel_for(static_cast<size_t>(kGradGroups), opts.threads, [&](size_t g) {
                const size_t lo = S * g / kGradGroups;
                const size_t hi = S * (g + 1) / kGradGroups;
                for (size_t slot = lo; slot < hi; ++slot)
                    encoder_backward(st.student, s_acts[slot], dlogits[slot], group_grads[g]);
            });
            EncoderParams<float>& grads = group_grads[0];
            for (int g = 1; g < kGradGroups; ++g) accumulate_params(grads, group_grads[g]);
            if (e < ccfg.freeze_prototypes_epochs)
                std::fill(grads.head_w2.v.begin(), grads.head_w2.v.end(), 0.0f);
            if (ccfg.grad_clip > 0.0) {
                double norm_sq = 0.0;
                for (auto& ref : param_refs(grads))
                    for (float g : ref.tensor->v) norm_sq += double(g) * g;
                const double norm = std::sqrt(norm_sq);
                if (norm > ccfg.grad_clip) {
                    const float scale = static_cast<float>(ccfg.grad_clip / norm);
                    for (auto& ref : param_refs(grads))
                        for (float& g : ref.tensor->v) g *= scale;
                }
            }

            // --- updates ---
            st.step += 1;
            const double lr = curriculum::lr_at(lr_cfg, e, s, steps);
            adamw_step(st.student, grads, st.adam_m, st.adam_v, st.step, lr, kAdamBeta1,
                       kAdamBeta2, kAdamEps, ccfg.weight_decay);

            int64_t ema_clock = global_step;
            int64_t ema_total = total_steps;
            if (ccfg.reset_ema_schedule_on_transition && boundary_step >= 0) {
                ema_clock = global_step - boundary_step;
                ema_total = total_steps - boundary_step;
            }
            ema_update(st.teacher, st.student, ema_momentum_at(lcfg, ema_clock, ema_total));
            update_center(st.center, t_logits, lcfg.center_momentum);

            epoch_loss += step_loss;
            epoch_entropy += step_entropy;
            cum_flops += static_cast<double>(B) *
                         evalsuite::train_flops_per_image(ecfg, plan, ccfg.n_local_crops);
            ++global_step;
        }

        TrainMetricsRow row;
        row.epoch = e;
        row.stage = plan.stage;
        row.loss = epoch_loss / steps;
        row.lr = curriculum::lr_at(lr_cfg, e, 0, steps);
        row.tokens = evalsuite::patch_tokens(ecfg, plan.global_res);
        row.cum_flops = cum_flops;
        result.metrics.push_back(row);
        result.teacher_entropy.push_back(epoch_entropy / steps);

        if (opts.verbose)
            std::fprintf(stderr, "epoch %3d  stage %s  loss %.5f  entropy %.4f\n", e,
                         plan.stage == curriculum::Stage::kLowFreq ? "low " : "full",
                         row.loss, epoch_entropy / steps);
    }

    result.metrics_csv = metrics_to_csv(result.metrics, opts.config_hash, seed);
    result.state = std::move(st);

    if (!opts.out_dir.empty()) {
        fs::create_directories(opts.out_dir);
        std::ofstream mcsv(fs::path(opts.out_dir) / "metrics.csv", std::ios::binary);
        if (!mcsv) throw std::runtime_error("cannot write metrics.csv under " + opts.out_dir);
        mcsv << result.metrics_csv;
        mcsv.close();
        save_checkpoint((fs::path(opts.out_dir) / "checkpoint").string(), result.state,
                        opts.config_hash, seed);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

const char* kManifestMagic = "freqvit-checkpoint-v1";

void save_side(const std::string& dir, const std::string& side, EncoderParams<float>& params,
               std::ostream& manifest) {
    for (auto& ref : param_refs(params)) {
        std::vector<uint32_t> dims;
        for (int d : ref.tensor->dims) dims.push_back(static_cast<uint32_t>(d));
        const std::string file = side + "." + ref.name + ".fvt";
        write_tensor_file((fs::path(dir) / file).string(), dims, ref.tensor->v.data());
        manifest << "tensor=" << side << "." << ref.name;
        for (uint32_t d : dims) manifest << " " << d;
        manifest << "\n";
    }
}

void load_side(const std::string& dir, const std::string& side, EncoderParams<float>& params) {
    for (auto& ref : param_refs(params)) {
        const std::string file = side + "." + ref.name + ".fvt";
        const TensorData t = read_tensor_file((fs::path(dir) / file).string());
        if (t.values.size() != ref.tensor->v.size())
            throw ParseError("checkpoint tensor size mismatch: " + file);
        std::copy(t.values.begin(), t.values.end(), ref.tensor->v.begin());
    }
}

}  // namespace

void save_checkpoint(const std::string& dir, const TrainState& state, uint64_t config_hash,
                     uint64_t seed) {
    fs::create_directories(dir);
    std::ostringstream manifest;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(config_hash));
    manifest << kManifestMagic << "\n";
    manifest << "config_hash=" << buf << "\n";
    manifest << "seed=" << seed << "\n";
    manifest << "step=" << state.step << "\n";
    manifest << "epoch=" << state.epoch << "\n";
    manifest << "transition_done=" << (state.transition_done ? 1 : 0) << "\n";
    const EncoderCfg& cfg = state.student.cfg;
    manifest << "patch=" << cfg.patch << "\ndim=" << cfg.dim << "\ndepth=" << cfg.depth
             << "\nheads=" << cfg.heads << "\nprototypes=" << cfg.prototypes
             << "\nhead_hidden=" << cfg.head_hidden << "\nchannels=" << cfg.channels << "\n";
    manifest << "pos_grid=" << state.student.pos_grid << "\n";

    auto& mut = const_cast<TrainState&>(state);
    save_side(dir, "student", mut.student, manifest);
    save_side(dir, "teacher", mut.teacher, manifest);
    save_side(dir, "adam_m", mut.adam_m, manifest);
    save_side(dir, "adam_v", mut.adam_v, manifest);

    write_tensor_file((fs::path(dir) / "center.fvt").string(),
                      {static_cast<uint32_t>(state.center.size())}, state.center.data());
    manifest << "tensor=center " << state.center.size() << "\n";

    std::ofstream out(fs::path(dir) / "manifest.txt", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint manifest under " + dir);
    out << manifest.str();
}

TrainState load_checkpoint(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "manifest.txt");
    if (!in) throw ParseError("missing checkpoint manifest: " + dir);
    std::string line;
    if (!std::getline(in, line) || line != kManifestMagic)
        throw ParseError("bad checkpoint manifest magic: " + dir);

    std::map<std::string, std::string> kv;
    while (std::getline(in, line)) {
        const size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto geti = [&](const char* key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw ParseError(std::string("checkpoint manifest missing ") + key);
        return std::stoll(it->second);
    };

    EncoderCfg cfg;
    cfg.patch = static_cast<int>(geti("patch"));
    cfg.dim = static_cast<int>(geti("dim"));
    cfg.depth = static_cast<int>(geti("depth"));
    cfg.heads = static_cast<int>(geti("heads"));
    cfg.prototypes = static_cast<int>(geti("prototypes"));
    cfg.head_hidden = static_cast<int>(geti("head_hidden"));
    cfg.channels = static_cast<int>(geti("channels"));
    const int pos_grid = static_cast<int>(geti("pos_grid"));

    TrainState st;
    st.student = make_encoder_params<float>(cfg, pos_grid * cfg.patch);
    st.teacher = make_encoder_params<float>(cfg, pos_grid * cfg.patch);
    st.adam_m = make_encoder_params<float>(cfg, pos_grid * cfg.patch);
    st.adam_v = make_encoder_params<float>(cfg, pos_grid * cfg.patch);
    load_side(dir, "student", st.student);
    load_side(dir, "teacher", st.teacher);
    load_side(dir, "adam_m", st.adam_m);
    load_side(dir, "adam_v", st.adam_v);

    const TensorData center = read_tensor_file((fs::path(dir) / "center.fvt").string());
    if (center.values.size() != static_cast<size_t>(cfg.prototypes))
        throw ParseError("checkpoint center has unexpected size");
    st.center = center.values;
    st.step = geti("step");
    st.epoch = static_cast<int>(geti("epoch"));
    st.transition_done = geti("transition_done") != 0;
    return st;
}

uint64_t checkpoint_checksum(const std::string& dir) { return checksum_dir(dir); }

}  // namespace freqvit::ssl

namespace freqvit::curriculum {

void on_stage_transition(ssl::TrainState& state, const CurriculumConfig& cfg) {
    const int boundary = stage_boundary(cfg);
    if (state.transition_done)
        throw std::logic_error("on_stage_transition: already performed for this run");
    if (state.epoch != boundary)
        throw std::logic_error("on_stage_transition: called at epoch " +
                               std::to_string(state.epoch) + ", boundary is " +
                               std::to_string(boundary));

    const ssl::EncoderCfg& ecfg = state.student.cfg;
    if (cfg.stage2_global_res % ecfg.patch != 0)
        throw ConfigError("stage2_global_res not divisible by patch");
    const int g2 = cfg.stage2_global_res / ecfg.patch;
    const int d = ecfg.dim;

    state.student.pos = ssl::interp_pos_embed(state.student.pos, state.student.pos_grid, g2, d);
    state.student.pos_grid = g2;
    state.teacher.pos = ssl::interp_pos_embed(state.teacher.pos, state.teacher.pos_grid, g2, d);
    state.teacher.pos_grid = g2;

    if (cfg.reset_optimizer_on_transition) {
        state.adam_m = ssl::make_encoder_params<float>(ecfg, cfg.stage2_global_res);
        state.adam_v = ssl::make_encoder_params<float>(ecfg, cfg.stage2_global_res);
        state.step = 0;
    } else {
        // Only the positional grid changes shape; its moments restart at zero.
        state.adam_m.pos = ssl::Tensor<float>::zeros({g2 * g2 + 1, d});
        state.adam_m.pos_grid = g2;
        state.adam_v.pos = ssl::Tensor<float>::zeros({g2 * g2 + 1, d});
        state.adam_v.pos_grid = g2;
    }
    state.transition_done = true;
}

}  // namespace freqvit::curriculum
