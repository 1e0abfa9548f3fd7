// Student-teacher self-distillation: centering + temperature cross-entropy
// loss, EMA teacher, AdamW with decoupled decay, the stage-transition hook,
// and the full training loop.
#pragma once

#include <cstdio>
#include <type_traits>

#include "freqvit/curriculum.hpp"
#include "freqvit/encoder.hpp"

namespace freqvit::ssl {

struct LossCfg {
    double student_temp = 0.1;
    double teacher_temp = 0.04;
    double center_momentum = 0.9;
    // cosine ramp horizon sized for short desk-scale schedules
    double ema_momentum_start = 0.9;
    double ema_momentum_end = 0.99;
};

inline void validate(const LossCfg& cfg) {
    if (!(cfg.teacher_temp > 0.0 && cfg.teacher_temp < cfg.student_temp))
        throw ConfigError("loss: require 0 < teacher_temp < student_temp");
    if (cfg.center_momentum < 0.0 || cfg.center_momentum > 1.0)
        throw ConfigError("loss: center_momentum must be in [0, 1]");
    if (cfg.ema_momentum_start < 0.0 || cfg.ema_momentum_start > 1.0 ||
        cfg.ema_momentum_end < 0.0 || cfg.ema_momentum_end > 1.0)
        throw ConfigError("loss: ema momenta must be in [0, 1]");
}

// ---------------------------------------------------------------------------
// Distillation loss
//
// Teacher views are the global crops (crop ids 0..T-1); student view j has
// crop id j, so globals shared with the teacher are skipped as same-crop
// pairs. Returns the mean cross-entropy over the remaining pairs; gradients
// are produced for student logits only (the teacher side is stop-gradient by
// construction).
// ---------------------------------------------------------------------------
template <class Real>
double distill_loss(const std::vector<std::vector<Real>>& teacher_logits,
                    const std::vector<std::vector<Real>>& student_logits,
                    const std::vector<Real>& center, const LossCfg& cfg,
                    std::type_identity_t<std::vector<std::vector<Real>>>* dstudent = nullptr) {
    const size_t T = teacher_logits.size();
    const size_t V = student_logits.size();
    if (T == 0 || V == 0) throw std::invalid_argument("distill_loss: need >= 1 view per side");
    const size_t K = teacher_logits[0].size();
    for (const auto& t : teacher_logits)
        if (t.size() != K) throw std::invalid_argument("distill_loss: K mismatch");
    for (const auto& s : student_logits)
        if (s.size() != K) throw std::invalid_argument("distill_loss: K mismatch");
    if (center.size() != K) throw std::invalid_argument("distill_loss: center K mismatch");

    size_t pairs = 0;
    for (size_t t = 0; t < T; ++t)
        for (size_t s = 0; s < V; ++s)
            if (t != s) ++pairs;
    if (pairs == 0)
        throw std::invalid_argument("distill_loss: no distinct-crop pairs");

    // Teacher probabilities p_t = softmax((t - c) / tau_t), in double.
    std::vector<std::vector<double>> pt(T, std::vector<double>(K));
    for (size_t t = 0; t < T; ++t) {
        double mx = -1e300;
        for (size_t k = 0; k < K; ++k) {
            pt[t][k] = (double(teacher_logits[t][k]) - double(center[k])) / cfg.teacher_temp;
            mx = std::max(mx, pt[t][k]);
        }
        double sum = 0.0;
        for (size_t k = 0; k < K; ++k) {
            pt[t][k] = std::exp(pt[t][k] - mx);
            sum += pt[t][k];
        }
        for (size_t k = 0; k < K; ++k) pt[t][k] /= sum;
    }

    // Student log-probabilities and probabilities at tau_s.
    std::vector<std::vector<double>> ps(V, std::vector<double>(K));
    std::vector<std::vector<double>> log_ps(V, std::vector<double>(K));
    for (size_t s = 0; s < V; ++s) {
        double mx = -1e300;
        for (size_t k = 0; k < K; ++k) {
            log_ps[s][k] = double(student_logits[s][k]) / cfg.student_temp;
            mx = std::max(mx, log_ps[s][k]);
        }
        double sum = 0.0;
        for (size_t k = 0; k < K; ++k) sum += std::exp(log_ps[s][k] - mx);
        const double lse = mx + std::log(sum);
        for (size_t k = 0; k < K; ++k) {
            log_ps[s][k] -= lse;
            ps[s][k] = std::exp(log_ps[s][k]);
        }
    }

    if (dstudent) {
        dstudent->assign(V, std::vector<Real>(K, Real(0)));
    }

    double loss = 0.0;
    const double inv_pairs = 1.0 / static_cast<double>(pairs);
    for (size_t t = 0; t < T; ++t) {
        for (size_t s = 0; s < V; ++s) {
            if (t == s) continue;
            double ce = 0.0;
            for (size_t k = 0; k < K; ++k) ce -= pt[t][k] * log_ps[s][k];
            loss += ce * inv_pairs;
            if (dstudent) {
                auto& ds = (*dstudent)[s];
                const double scale = inv_pairs / cfg.student_temp;
                for (size_t k = 0; k < K; ++k)
                    ds[k] += Real((ps[s][k] - pt[t][k]) * scale);
            }
        }
    }
    return loss;
}

// c <- mu * c + (1 - mu) * mean(teacher logits over the batch)
template <class Real>
void update_center(std::vector<Real>& center,
                   const std::vector<std::vector<Real>>& teacher_logits_batch, double mu) {
    if (teacher_logits_batch.empty())
        throw std::invalid_argument("update_center: empty batch");
    const size_t K = center.size();
    std::vector<double> mean(K, 0.0);
    for (const auto& t : teacher_logits_batch) {
        if (t.size() != K) throw std::invalid_argument("update_center: K mismatch");
        for (size_t k = 0; k < K; ++k) mean[k] += t[k];
    }
    const double inv = 1.0 / static_cast<double>(teacher_logits_batch.size());
    for (size_t k = 0; k < K; ++k)
        center[k] = Real(mu * double(center[k]) + (1.0 - mu) * mean[k] * inv);
}

// theta_t <- m * theta_t + (1 - m) * theta_s, elementwise.
template <class Real>
void ema_update(EncoderParams<Real>& teacher, const EncoderParams<Real>& student,
                double m_ema) {
    auto trefs = param_refs(teacher);
    auto srefs = param_refs(const_cast<EncoderParams<Real>&>(student));
    if (trefs.size() != srefs.size())
        throw std::invalid_argument("ema_update: structure mismatch");
    for (size_t i = 0; i < trefs.size(); ++i) {
        auto& tv = trefs[i].tensor->v;
        const auto& sv = srefs[i].tensor->v;
        if (tv.size() != sv.size()) throw std::invalid_argument("ema_update: shape mismatch");
        for (size_t j = 0; j < tv.size(); ++j)
            tv[j] = Real(m_ema * double(tv[j]) + (1.0 - m_ema) * double(sv[j]));
    }
}

// Cosine EMA momentum ramp from start to end over total_steps.
inline double ema_momentum_at(const LossCfg& cfg, int64_t step, int64_t total_steps) {
    if (total_steps <= 1) return cfg.ema_momentum_end;
    const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps - 1));
    return cfg.ema_momentum_end -
           (cfg.ema_momentum_end - cfg.ema_momentum_start) * 0.5 *
               (1.0 + std::cos(std::numbers::pi * t));
}

// Standard AdamW with bias correction; decoupled decay applies only to
// parameter blocks flagged decay (weight matrices). step is 1-based.
template <class Real>
void adamw_step(EncoderParams<Real>& params, EncoderParams<Real>& grads,
                EncoderParams<Real>& m, EncoderParams<Real>& v, int64_t step, double lr,
                double beta1, double beta2, double eps, double weight_decay) {
    auto prefs = param_refs(params);
    auto grefs = param_refs(grads);
    auto mrefs = param_refs(m);
    auto vrefs = param_refs(v);
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (size_t i = 0; i < prefs.size(); ++i) {
        auto& pv = prefs[i].tensor->v;
        auto& gv = grefs[i].tensor->v;
        auto& mv = mrefs[i].tensor->v;
        auto& vv = vrefs[i].tensor->v;
        if (pv.size() != gv.size() || pv.size() != mv.size() || pv.size() != vv.size())
            throw std::invalid_argument("adamw_step: shape mismatch in block " + prefs[i].name);
        for (size_t j = 0; j < gv.size(); ++j)
            if (!std::isfinite(static_cast<double>(gv[j])))
                throw std::runtime_error("adamw_step: nonfinite gradient in block " +
                                         prefs[i].name);
        const double wd = prefs[i].decay ? weight_decay : 0.0;
        for (size_t j = 0; j < pv.size(); ++j) {
            const double g = gv[j];
            const double mn = beta1 * double(mv[j]) + (1.0 - beta1) * g;
            const double vn = beta2 * double(vv[j]) + (1.0 - beta2) * g * g;
            mv[j] = Real(mn);
            vv[j] = Real(vn);
            const double mhat = mn / bc1;
            const double vhat = vn / bc2;
            double x = double(pv[j]);
            x -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * x);
            pv[j] = Real(x);
        }
    }
}

// ---------------------------------------------------------------------------
// TrainState and the training loop
// ---------------------------------------------------------------------------

struct TrainState {
    EncoderParams<float> student;
    EncoderParams<float> teacher;
    EncoderParams<float> adam_m;
    EncoderParams<float> adam_v;
    std::vector<float> center;
    int64_t step = 0;
    int epoch = 0;
    bool transition_done = false;
};

TrainState make_train_state(const EncoderCfg& cfg, int resolution, uint64_t seed);

struct TrainMetricsRow {
    int epoch = 0;
    curriculum::Stage stage = curriculum::Stage::kLowFreq;
    double loss = 0.0;
    double lr = 0.0;
    int64_t tokens = 0;      // patch tokens per global-crop forward pass
    double cum_flops = 0.0;  // cumulative estimated training FLOPs
};

struct TrainOptions {
    bool baseline = false;  // single full-res stage: no curriculum, no patching
    int threads = 1;
    std::string out_dir;  // when set, writes metrics.csv and checkpoint/
    uint64_t config_hash = 0;
    bool verbose = false;
};

struct TrainResult {
    TrainState state;
    std::vector<TrainMetricsRow> metrics;
    std::vector<double> teacher_entropy;  // per epoch, mean over steps
    std::string metrics_csv;
};

TrainResult train_run(const std::vector<ImageTensor>& train_images,
                      const curriculum::CurriculumConfig& ccfg, const EncoderCfg& ecfg,
                      const LossCfg& lcfg, uint64_t seed, const TrainOptions& opts);

std::string metrics_to_csv(const std::vector<TrainMetricsRow>& rows, uint64_t config_hash,
                           uint64_t seed);

// ---------------------------------------------------------------------------
// Checkpoints: one FVT1 tensor file per parameter block plus a manifest.
// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& dir, const TrainState& state, uint64_t config_hash,
                     uint64_t seed);
TrainState load_checkpoint(const std::string& dir);
uint64_t checkpoint_checksum(const std::string& dir);

}  // namespace freqvit::ssl

namespace freqvit::curriculum {

// Optimizer restart at the stage boundary: zeroes Adam moments and the step
// counter, interpolates the student and teacher positional grids to the
// stage-2 token grid, and leaves every other weight untouched. Must be called
// exactly once, at the boundary epoch. When reset_optimizer_on_transition is
// off, only the positional-grid moments are reshaped (zeroed); the remaining
// moments and the step counter carry over.
void on_stage_transition(ssl::TrainState& state, const CurriculumConfig& cfg);

}  // namespace freqvit::curriculum
