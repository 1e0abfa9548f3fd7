// Tiny ViT encoder with a hand-written backward pass, templated on the scalar
// type: training runs in float, gradient checks in double. Single-view
// forward/backward; batching is a loop (possibly parallel) over views.
#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "freqvit/core.hpp"
#include "freqvit/imaging.hpp"

namespace freqvit::ssl {

constexpr int kMlpRatio = 4;
constexpr double kLayerNormEps = 1e-6;

struct EncoderCfg {
    int patch = 8;
    int dim = 64;
    int depth = 4;
    int heads = 4;
    int prototypes = 256;  // K output logits
    int head_hidden = 128;
    int channels = 3;
};

inline void validate(const EncoderCfg& cfg) {
    if (cfg.patch < 1 || cfg.dim < 1 || cfg.depth < 1 || cfg.heads < 1 ||
        cfg.prototypes < 1 || cfg.head_hidden < 1)
        throw ConfigError("encoder: all dimensions must be >= 1");
    if (cfg.dim % cfg.heads != 0) throw ConfigError("encoder: dim must be divisible by heads");
    if (cfg.channels != 1 && cfg.channels != 3)
        throw ConfigError("encoder: channels must be 1 or 3");
}

// ---------------------------------------------------------------------------
// Flat tensors and matmul kernels
// ---------------------------------------------------------------------------

template <class Real>
struct Tensor {
    std::vector<int> dims;
    std::vector<Real> v;

    static Tensor zeros(std::vector<int> d) {
        Tensor t;
        size_t total = 1;
        for (int x : d) total *= static_cast<size_t>(x);
        t.dims = std::move(d);
        t.v.assign(total, Real(0));
        return t;
    }
    size_t size() const { return v.size(); }
    Real* data() { return v.data(); }
    const Real* data() const { return v.data(); }
};

// C (m x n) = or += A (m x k) . B (k x n)
template <class Real>
void matmul(const Real* a, const Real* b, Real* c, int m, int k, int n, bool accumulate) {
    if (!accumulate) std::fill(c, c + static_cast<size_t>(m) * n, Real(0));
    for (int i = 0; i < m; ++i) {
        const Real* arow = a + static_cast<size_t>(i) * k;
        Real* crow = c + static_cast<size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const Real av = arow[kk];
            if (av == Real(0)) continue;
            const Real* brow = b + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C (m x n) += A^T . B with A (k x m), B (k x n)
template <class Real>
void matmul_at_b(const Real* a, const Real* b, Real* c, int k, int m, int n) {
    for (int kk = 0; kk < k; ++kk) {
        const Real* arow = a + static_cast<size_t>(kk) * m;
        const Real* brow = b + static_cast<size_t>(kk) * n;
        for (int i = 0; i < m; ++i) {
            const Real av = arow[i];
            if (av == Real(0)) continue;
            Real* crow = c + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C (m x n) += A . B^T with A (m x k), B (n x k)
template <class Real>
void matmul_a_bt(const Real* a, const Real* b, Real* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const Real* arow = a + static_cast<size_t>(i) * k;
        Real* crow = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const Real* brow = b + static_cast<size_t>(j) * k;
            Real acc(0);
            for (int kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
            crow[j] += acc;
        }
    }
}

template <class Real>
void add_bias_rows(Real* x, const Real* bias, int rows, int cols) {
    for (int i = 0; i < rows; ++i) {
        Real* row = x + static_cast<size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) row[j] += bias[j];
    }
}

template <class Real>
void add_colsum(const Real* dy, Real* db, int rows, int cols) {
    for (int i = 0; i < rows; ++i) {
        const Real* row = dy + static_cast<size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) db[j] += row[j];
    }
}

template <class Real>
Real gelu(Real x) {
    return Real(0.5) * x * (Real(1) + std::erf(x * Real(std::numbers::sqrt2 / 2.0)));
}

template <class Real>
Real gelu_grad(Real x) {
    const Real cdf = Real(0.5) * (Real(1) + std::erf(x * Real(std::numbers::sqrt2 / 2.0)));
    const Real pdf = Real(std::exp(-0.5 * double(x) * double(x)) /
                          std::sqrt(2.0 * std::numbers::pi));
    return cdf + x * pdf;
}

// Stable in-place softmax over one row.
template <class Real>
void softmax_row(Real* x, int n) {
    Real mx = x[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    Real sum(0);
    for (int i = 0; i < n; ++i) {
        x[i] = std::exp(x[i] - mx);
        sum += x[i];
    }
    const Real inv = Real(1) / sum;
    for (int i = 0; i < n; ++i) x[i] *= inv;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

template <class Real>
struct EncoderBlock {
    Tensor<Real> ln1_g, ln1_b;
    Tensor<Real> wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor<Real> ln2_g, ln2_b;
    Tensor<Real> w1, b1, w2, b2;
};

template <class Real>
struct EncoderParams {
    EncoderCfg cfg;
    int pos_grid = 0;  // token grid side g; pos has g*g + 1 rows (row 0 = class token slot)

    Tensor<Real> patch_w, patch_b;
    Tensor<Real> cls;
    Tensor<Real> pos;
    std::vector<EncoderBlock<Real>> blocks;
    Tensor<Real> lnf_g, lnf_b;
    Tensor<Real> head_w1, head_b1, head_w2;  // prototype layer carries no bias
};

template <class Real>
struct ParamRef {
    std::string name;
    Tensor<Real>* tensor;
    bool decay;  // true only for weight matrices
};

template <class Real>
std::vector<ParamRef<Real>> param_refs(EncoderParams<Real>& p) {
    std::vector<ParamRef<Real>> refs;
    refs.push_back({"patch_w", &p.patch_w, true});
    refs.push_back({"patch_b", &p.patch_b, false});
    refs.push_back({"cls", &p.cls, false});
    refs.push_back({"pos", &p.pos, false});
    for (size_t b = 0; b < p.blocks.size(); ++b) {
        auto& blk = p.blocks[b];
        const std::string pre = "block" + std::to_string(b) + ".";
        refs.push_back({pre + "ln1_g", &blk.ln1_g, false});
        refs.push_back({pre + "ln1_b", &blk.ln1_b, false});
        refs.push_back({pre + "wq", &blk.wq, true});
        refs.push_back({pre + "bq", &blk.bq, false});
        refs.push_back({pre + "wk", &blk.wk, true});
        refs.push_back({pre + "bk", &blk.bk, false});
        refs.push_back({pre + "wv", &blk.wv, true});
        refs.push_back({pre + "bv", &blk.bv, false});
        refs.push_back({pre + "wo", &blk.wo, true});
        refs.push_back({pre + "bo", &blk.bo, false});
        refs.push_back({pre + "ln2_g", &blk.ln2_g, false});
        refs.push_back({pre + "ln2_b", &blk.ln2_b, false});
        refs.push_back({pre + "w1", &blk.w1, true});
        refs.push_back({pre + "b1", &blk.b1, false});
        refs.push_back({pre + "w2", &blk.w2, true});
        refs.push_back({pre + "b2", &blk.b2, false});
    }
    refs.push_back({"lnf_g", &p.lnf_g, false});
    refs.push_back({"lnf_b", &p.lnf_b, false});
    refs.push_back({"head_w1", &p.head_w1, true});
    refs.push_back({"head_b1", &p.head_b1, false});
    refs.push_back({"head_w2", &p.head_w2, true});
    return refs;
}

// Zero-filled parameter container congruent to cfg at the given native
// resolution (used for params, gradients, and Adam moments alike).
template <class Real>
EncoderParams<Real> make_encoder_params(const EncoderCfg& cfg, int resolution) {
    validate(cfg);
    if (resolution % cfg.patch != 0)
        throw std::invalid_argument("encoder: resolution " + std::to_string(resolution) +
                                    " not divisible by patch " + std::to_string(cfg.patch));
    const int g = resolution / cfg.patch;
    const int d = cfg.dim;
    const int pd = cfg.patch * cfg.patch * cfg.channels;
    const int hd = d * kMlpRatio;

    EncoderParams<Real> p;
    p.cfg = cfg;
    p.pos_grid = g;
    p.patch_w = Tensor<Real>::zeros({pd, d});
    p.patch_b = Tensor<Real>::zeros({d});
    p.cls = Tensor<Real>::zeros({d});
    p.pos = Tensor<Real>::zeros({g * g + 1, d});
    p.blocks.resize(cfg.depth);
    for (auto& blk : p.blocks) {
        blk.ln1_g = Tensor<Real>::zeros({d});
        blk.ln1_b = Tensor<Real>::zeros({d});
        blk.wq = Tensor<Real>::zeros({d, d});
        blk.bq = Tensor<Real>::zeros({d});
        blk.wk = Tensor<Real>::zeros({d, d});
        blk.bk = Tensor<Real>::zeros({d});
        blk.wv = Tensor<Real>::zeros({d, d});
        blk.bv = Tensor<Real>::zeros({d});
        blk.wo = Tensor<Real>::zeros({d, d});
        blk.bo = Tensor<Real>::zeros({d});
        blk.ln2_g = Tensor<Real>::zeros({d});
        blk.ln2_b = Tensor<Real>::zeros({d});
        blk.w1 = Tensor<Real>::zeros({d, hd});
        blk.b1 = Tensor<Real>::zeros({hd});
        blk.w2 = Tensor<Real>::zeros({hd, d});
        blk.b2 = Tensor<Real>::zeros({d});
    }
    p.lnf_g = Tensor<Real>::zeros({d});
    p.lnf_b = Tensor<Real>::zeros({d});
    p.head_w1 = Tensor<Real>::zeros({d, cfg.head_hidden});
    p.head_b1 = Tensor<Real>::zeros({cfg.head_hidden});
    p.head_w2 = Tensor<Real>::zeros({cfg.head_hidden, cfg.prototypes});
    return p;
}

// Fan-in-scaled normal init for weight matrices (std = 1/sqrt(rows)), N(0,
// 0.02) embeddings, unit LayerNorm gains, zero biases. The fan-in scale keeps
// logit spreads O(1) so the distillation signal is alive within the short
// desk-scale schedules.
template <class Real>
EncoderParams<Real> init_encoder_params(const EncoderCfg& cfg, int resolution, uint64_t seed) {
    EncoderParams<Real> p = make_encoder_params<Real>(cfg, resolution);
    Prng rng(seed, 0x494e4954ull);  // init lane
    for (auto& ref : param_refs(p)) {
        const bool is_gain = ref.name.size() >= 2 &&
                             ref.name.substr(ref.name.size() - 2) == "_g";
        if (ref.decay) {
            const double std = 1.0 / std::sqrt(static_cast<double>(ref.tensor->dims[0]));
            for (auto& x : ref.tensor->v) x = Real(std * rng.gaussian());
        } else if (ref.name == "cls" || ref.name == "pos") {
            for (auto& x : ref.tensor->v) x = Real(0.02 * rng.gaussian());
        } else if (is_gain) {
            std::fill(ref.tensor->v.begin(), ref.tensor->v.end(), Real(1));
        }
        // biases stay zero
    }
    return p;
}

template <class Real>
void zero_params(EncoderParams<Real>& p) {
    for (auto& ref : param_refs(p)) std::fill(ref.tensor->v.begin(), ref.tensor->v.end(), Real(0));
}

template <class Real>
uint64_t params_checksum(const EncoderParams<Real>& p) {
    uint64_t h = kFnvOffset;
    auto& mut = const_cast<EncoderParams<Real>&>(p);
    for (auto& ref : param_refs(mut)) {
        h = fnv1a64_str(ref.name, h);
        h = fnv1a64(ref.tensor->v.data(), ref.tensor->v.size() * sizeof(Real), h);
    }
    return h;
}

// ---------------------------------------------------------------------------
// Positional-embedding interpolation (bicubic, no [0,1] clamp)
// ---------------------------------------------------------------------------

namespace detail {

struct PosTap {
    int idx[4];
    double w[4];
};

inline std::vector<PosTap> pos_taps(int in_size, int out_size) {
    std::vector<PosTap> taps(out_size);
    for (int o = 0; o < out_size; ++o) {
        const double x = static_cast<double>(o) * in_size / out_size;
        const int x0 = static_cast<int>(std::floor(x));
        const double dx = x - x0;
        for (int m = -1; m <= 2; ++m) {
            taps[o].w[m + 1] = imaging::kernel_weight(static_cast<double>(m) - dx);
            taps[o].idx[m + 1] = std::clamp(x0 + m, 0, in_size - 1);
        }
    }
    return taps;
}

}  // namespace detail

// Resizes the g x g positional grid to g' x g' with the same cubic kernel and
// corner-anchored mapping as image resampling; the class-token row (row 0) is
// carried over unchanged. Embeddings are signed, so no range clamp applies.
template <class Real>
Tensor<Real> interp_pos_embed(const Tensor<Real>& pos, int g_in, int g_out, int dim) {
    if (pos.dims.size() != 2 || pos.dims[0] != g_in * g_in + 1 || pos.dims[1] != dim)
        throw std::invalid_argument("interp_pos_embed: unexpected pos shape");
    Tensor<Real> out = Tensor<Real>::zeros({g_out * g_out + 1, dim});
    for (int c = 0; c < dim; ++c) out.v[c] = pos.v[c];  // class-token row

    if (g_in == g_out) {
        std::copy(pos.v.begin() + dim, pos.v.end(), out.v.begin() + dim);
        return out;
    }
    const auto taps = detail::pos_taps(g_in, g_out);
    for (int oy = 0; oy < g_out; ++oy) {
        for (int ox = 0; ox < g_out; ++ox) {
            Real* dst = out.data() + (static_cast<size_t>(oy) * g_out + ox + 1) * dim;
            for (int n = 0; n < 4; ++n) {
                for (int m = 0; m < 4; ++m) {
                    const double w = taps[oy].w[n] * taps[ox].w[m];
                    if (w == 0.0) continue;
                    const Real* src = pos.data() +
                        (static_cast<size_t>(taps[oy].idx[n]) * g_in + taps[ox].idx[m] + 1) *
                            static_cast<size_t>(dim);
                    for (int c = 0; c < dim; ++c) dst[c] += Real(w) * src[c];
                }
            }
        }
    }
    return out;
}

// Transpose of interp_pos_embed: scatters the gradient at the g_out grid back
// onto the g_in grid (class-token row included verbatim).
template <class Real>
void interp_pos_embed_backward(const Tensor<Real>& dpos_out, int g_in, int g_out, int dim,
                               Tensor<Real>& dpos_in) {
    for (int c = 0; c < dim; ++c) dpos_in.v[c] += dpos_out.v[c];
    if (g_in == g_out) {
        for (size_t i = dim; i < dpos_out.size(); ++i) dpos_in.v[i] += dpos_out.v[i];
        return;
    }
    const auto taps = detail::pos_taps(g_in, g_out);
    for (int oy = 0; oy < g_out; ++oy) {
        for (int ox = 0; ox < g_out; ++ox) {
            const Real* src = dpos_out.data() + (static_cast<size_t>(oy) * g_out + ox + 1) * dim;
            for (int n = 0; n < 4; ++n) {
                for (int m = 0; m < 4; ++m) {
                    const double w = taps[oy].w[n] * taps[ox].w[m];
                    if (w == 0.0) continue;
                    Real* dst = dpos_in.data() +
                        (static_cast<size_t>(taps[oy].idx[n]) * g_in + taps[ox].idx[m] + 1) *
                            static_cast<size_t>(dim);
                    for (int c = 0; c < dim; ++c) dst[c] += Real(w) * src[c];
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

template <class Real>
struct BlockActs {
    Tensor<Real> x_in;
    Tensor<Real> ln1_xhat, ln1_out;
    std::vector<Real> ln1_invstd;
    Tensor<Real> q, k, v;
    Tensor<Real> attn;         // [heads * n * n] softmax probabilities
    Tensor<Real> attn_concat;  // [n, d]
    Tensor<Real> y;            // residual after attention
    Tensor<Real> ln2_xhat, ln2_out;
    std::vector<Real> ln2_invstd;
    Tensor<Real> h_pre, h_act;  // [n, 4d]
};

template <class Real>
struct EncoderActs {
    int n = 0;       // tokens (patches + class)
    int g_in = 0;    // token grid of this view
    Tensor<Real> patches;   // [n-1, patch_dim]
    Tensor<Real> pos_used;  // pos grid actually added (interpolated when g_in != pos_grid)
    std::vector<BlockActs<Real>> blocks;
    Tensor<Real> x_out;  // [n, d] output of last block
    std::vector<Real> feature;   // [d] class token (pre-norm); the probe feature
    std::vector<Real> lnf_xhat;  // head input LayerNorm, class row only
    Real lnf_invstd = Real(0);
    std::vector<Real> lnf_out;   // [d] normalized head input
    std::vector<Real> head_h_pre, head_h_act;  // [hidden]
    std::vector<Real> head_h_unit;             // h_act / |h_act|
    Real head_h_norm = Real(0);
    std::vector<Real> w2_col_norm;             // per-prototype direction norms
    std::vector<Real> logits;    // [K]
};

template <class Real>
void layer_norm_rows(const Tensor<Real>& x, const Tensor<Real>& gain, const Tensor<Real>& bias,
                     int rows, int cols, Tensor<Real>& xhat, std::vector<Real>& invstd,
                     Tensor<Real>& out) {
    for (int i = 0; i < rows; ++i) {
        const Real* xr = x.data() + static_cast<size_t>(i) * cols;
        Real* hr = xhat.data() + static_cast<size_t>(i) * cols;
        Real* orow = out.data() + static_cast<size_t>(i) * cols;
        Real mean(0);
        for (int j = 0; j < cols; ++j) mean += xr[j];
        mean /= Real(cols);
        Real var(0);
        for (int j = 0; j < cols; ++j) {
            const Real dxj = xr[j] - mean;
            var += dxj * dxj;
        }
        var /= Real(cols);
        const Real inv = Real(1) / std::sqrt(var + Real(kLayerNormEps));
        invstd[i] = inv;
        for (int j = 0; j < cols; ++j) {
            hr[j] = (xr[j] - mean) * inv;
            orow[j] = gain.v[j] * hr[j] + bias.v[j];
        }
    }
}

// dx += LN backward; accumulates dgain/dbias.
template <class Real>
void layer_norm_backward_rows(const Tensor<Real>& dout, const Tensor<Real>& xhat,
                              const std::vector<Real>& invstd, const Tensor<Real>& gain,
                              int rows, int cols, Tensor<Real>& dgain, Tensor<Real>& dbias,
                              Tensor<Real>& dx) {
    for (int i = 0; i < rows; ++i) {
        const Real* dor = dout.data() + static_cast<size_t>(i) * cols;
        const Real* hr = xhat.data() + static_cast<size_t>(i) * cols;
        Real* dxr = dx.data() + static_cast<size_t>(i) * cols;
        Real sum_dh(0), sum_dh_h(0);
        for (int j = 0; j < cols; ++j) {
            dgain.v[j] += dor[j] * hr[j];
            dbias.v[j] += dor[j];
            const Real dh = dor[j] * gain.v[j];
            sum_dh += dh;
            sum_dh_h += dh * hr[j];
        }
        const Real m1 = sum_dh / Real(cols);
        const Real m2 = sum_dh_h / Real(cols);
        for (int j = 0; j < cols; ++j) {
            const Real dh = dor[j] * gain.v[j];
            dxr[j] += invstd[i] * (dh - m1 - hr[j] * m2);
        }
    }
}

template <class Real>
void patchify(const ImageTensor& img, int patch, int channels, Tensor<Real>& out) {
    const int g = img.height / patch;
    const int pd = patch * patch * channels;
    int row = 0;
    for (int gy = 0; gy < g; ++gy)
        for (int gx = 0; gx < g; ++gx, ++row) {
            Real* dst = out.data() + static_cast<size_t>(row) * pd;
            int idx = 0;
            for (int py = 0; py < patch; ++py)
                for (int px = 0; px < patch; ++px)
                    for (int ch = 0; ch < channels; ++ch)
                        dst[idx++] = Real(img.at(gy * patch + py, gx * patch + px, ch));
        }
}

// Forward pass on one square view. When the view's token grid differs from
// params.pos_grid the positional grid is bicubically interpolated on the fly
// (allow_pos_interp must be set; gradients flow back through the resize).
template <class Real>
void encoder_forward(const EncoderParams<Real>& p, const ImageTensor& img,
                     EncoderActs<Real>& acts, bool allow_pos_interp = true) {
    const EncoderCfg& cfg = p.cfg;
    if (img.height != img.width)
        throw std::invalid_argument("encoder_forward: view must be square");
    if (img.channels != cfg.channels)
        throw std::invalid_argument("encoder_forward: channel mismatch");
    if (img.height % cfg.patch != 0)
        throw std::invalid_argument("encoder_forward: resolution " +
                                    std::to_string(img.height) + " not divisible by patch");
    const int g = img.height / cfg.patch;
    if (g != p.pos_grid && !allow_pos_interp)
        throw std::invalid_argument("encoder_forward: resolution/patch mismatch without "
                                    "interpolation enabled");
    const int d = cfg.dim;
    const int np = g * g;
    const int n = np + 1;
    const int pd = cfg.patch * cfg.patch * cfg.channels;
    const int hd = d * kMlpRatio;
    const int dh = d / cfg.heads;

    acts.n = n;
    acts.g_in = g;
    acts.patches = Tensor<Real>::zeros({np, pd});
    patchify(img, cfg.patch, cfg.channels, acts.patches);

    acts.pos_used = (g == p.pos_grid)
                        ? p.pos
                        : interp_pos_embed(p.pos, p.pos_grid, g, d);

    Tensor<Real> x = Tensor<Real>::zeros({n, d});
    matmul(acts.patches.data(), p.patch_w.data(), x.data() + d, np, pd, d, true);
    add_bias_rows(x.data() + d, p.patch_b.data(), np, d);
    for (int j = 0; j < d; ++j) x.v[j] = p.cls.v[j];
    for (size_t i = 0; i < x.size(); ++i) x.v[i] += acts.pos_used.v[i];

    acts.blocks.clear();
    acts.blocks.resize(cfg.depth);
    const Real inv_sqrt_dh = Real(1.0 / std::sqrt(static_cast<double>(dh)));

    for (int b = 0; b < cfg.depth; ++b) {
        auto& blk = p.blocks[b];
        auto& ba = acts.blocks[b];
        ba.x_in = x;
        ba.ln1_xhat = Tensor<Real>::zeros({n, d});
        ba.ln1_out = Tensor<Real>::zeros({n, d});
        ba.ln1_invstd.assign(n, Real(0));
        layer_norm_rows(ba.x_in, blk.ln1_g, blk.ln1_b, n, d, ba.ln1_xhat, ba.ln1_invstd,
                        ba.ln1_out);

        ba.q = Tensor<Real>::zeros({n, d});
        ba.k = Tensor<Real>::zeros({n, d});
        ba.v = Tensor<Real>::zeros({n, d});
        matmul(ba.ln1_out.data(), blk.wq.data(), ba.q.data(), n, d, d, true);
        add_bias_rows(ba.q.data(), blk.bq.data(), n, d);
        matmul(ba.ln1_out.data(), blk.wk.data(), ba.k.data(), n, d, d, true);
        add_bias_rows(ba.k.data(), blk.bk.data(), n, d);
        matmul(ba.ln1_out.data(), blk.wv.data(), ba.v.data(), n, d, d, true);
        add_bias_rows(ba.v.data(), blk.bv.data(), n, d);

        ba.attn = Tensor<Real>::zeros({cfg.heads, n, n});
        ba.attn_concat = Tensor<Real>::zeros({n, d});
        for (int h = 0; h < cfg.heads; ++h) {
            Real* scores = ba.attn.data() + static_cast<size_t>(h) * n * n;
            for (int i = 0; i < n; ++i) {
                const Real* qi = ba.q.data() + static_cast<size_t>(i) * d + h * dh;
                Real* srow = scores + static_cast<size_t>(i) * n;
                for (int j = 0; j < n; ++j) {
                    const Real* kj = ba.k.data() + static_cast<size_t>(j) * d + h * dh;
                    Real acc(0);
                    for (int t = 0; t < dh; ++t) acc += qi[t] * kj[t];
                    srow[j] = acc * inv_sqrt_dh;
                }
                softmax_row(srow, n);
                Real* orow = ba.attn_concat.data() + static_cast<size_t>(i) * d + h * dh;
                for (int j = 0; j < n; ++j) {
                    const Real aij = srow[j];
                    if (aij == Real(0)) continue;
                    const Real* vj = ba.v.data() + static_cast<size_t>(j) * d + h * dh;
                    for (int t = 0; t < dh; ++t) orow[t] += aij * vj[t];
                }
            }
        }

        ba.y = ba.x_in;
        matmul(ba.attn_concat.data(), blk.wo.data(), ba.y.data(), n, d, d, true);
        add_bias_rows(ba.y.data(), blk.bo.data(), n, d);

        ba.ln2_xhat = Tensor<Real>::zeros({n, d});
        ba.ln2_out = Tensor<Real>::zeros({n, d});
        ba.ln2_invstd.assign(n, Real(0));
        layer_norm_rows(ba.y, blk.ln2_g, blk.ln2_b, n, d, ba.ln2_xhat, ba.ln2_invstd,
                        ba.ln2_out);

        ba.h_pre = Tensor<Real>::zeros({n, hd});
        matmul(ba.ln2_out.data(), blk.w1.data(), ba.h_pre.data(), n, d, hd, true);
        add_bias_rows(ba.h_pre.data(), blk.b1.data(), n, hd);
        ba.h_act = ba.h_pre;
        for (auto& t : ba.h_act.v) t = gelu(t);

        x = ba.y;
        matmul(ba.h_act.data(), blk.w2.data(), x.data(), n, hd, d, true);
        add_bias_rows(x.data(), blk.b2.data(), n, d);
    }

    acts.x_out = x;

    // The class token itself is the probe feature; the head normalizes it
    // first (LayerNorm on the class row only).
    acts.feature.assign(x.v.begin(), x.v.begin() + d);
    acts.lnf_xhat.assign(d, Real(0));
    acts.lnf_out.assign(d, Real(0));
    {
        Real mean(0);
        for (int j = 0; j < d; ++j) mean += x.v[j];
        mean /= Real(d);
        Real var(0);
        for (int j = 0; j < d; ++j) {
            const Real dxj = x.v[j] - mean;
            var += dxj * dxj;
        }
        var /= Real(d);
        acts.lnf_invstd = Real(1) / std::sqrt(var + Real(kLayerNormEps));
        for (int j = 0; j < d; ++j) {
            acts.lnf_xhat[j] = (x.v[j] - mean) * acts.lnf_invstd;
            acts.lnf_out[j] = p.lnf_g.v[j] * acts.lnf_xhat[j] + p.lnf_b.v[j];
        }
    }

    const int hh = cfg.head_hidden;
    const int K = cfg.prototypes;
    acts.head_h_pre.assign(hh, Real(0));
    matmul(acts.lnf_out.data(), p.head_w1.data(), acts.head_h_pre.data(), 1, d, hh, true);
    for (int j = 0; j < hh; ++j) acts.head_h_pre[j] += p.head_b1.v[j];
    acts.head_h_act = acts.head_h_pre;
    for (auto& t : acts.head_h_act) t = gelu(t);

    // Cosine prototype layer: both the hidden vector and each prototype
    // direction are L2-normalized, which pins the logit scale and keeps the
    // centering/sharpening balance stable over short schedules.
    Real hnorm(0);
    for (int j = 0; j < hh; ++j) hnorm += acts.head_h_act[j] * acts.head_h_act[j];
    hnorm = std::sqrt(hnorm);
    acts.head_h_norm = hnorm;
    acts.head_h_unit.assign(hh, Real(0));
    if (hnorm > Real(1e-12))
        for (int j = 0; j < hh; ++j) acts.head_h_unit[j] = acts.head_h_act[j] / hnorm;

    acts.w2_col_norm.assign(K, Real(0));
    acts.logits.assign(K, Real(0));
    for (int k = 0; k < K; ++k) {
        Real wn(0), dot(0);
        for (int j = 0; j < hh; ++j) {
            const Real w = p.head_w2.v[static_cast<size_t>(j) * K + k];
            wn += w * w;
            dot += w * acts.head_h_unit[j];
        }
        wn = std::sqrt(wn);
        acts.w2_col_norm[k] = wn;
        acts.logits[k] = wn > Real(1e-12) ? dot / wn : Real(0);
    }
}

// Accumulates parameter gradients for one view given dL/dlogits.
template <class Real>
void encoder_backward(const EncoderParams<Real>& p, const EncoderActs<Real>& acts,
                      const std::vector<Real>& dlogits, EncoderParams<Real>& grads) {
    const EncoderCfg& cfg = p.cfg;
    const int d = cfg.dim;
    const int n = acts.n;
    const int np = n - 1;
    const int hd = d * kMlpRatio;
    const int hh = cfg.head_hidden;
    const int K = cfg.prototypes;
    const int dh = d / cfg.heads;
    const Real inv_sqrt_dh = Real(1.0 / std::sqrt(static_cast<double>(dh)));

    // Head: cosine prototype layer. logits_k = u . vhat_k + b_k with
    // u = h/|h| and vhat_k = v_k/|v_k| (columns of head_w2).
    std::vector<Real> du(hh, Real(0));
    for (int k = 0; k < K; ++k) {
        const Real wn = acts.w2_col_norm[k];
        if (wn <= Real(1e-12) || dlogits[k] == Real(0)) continue;
        const Real cos_k = acts.logits[k];
        const Real scale = dlogits[k] / wn;
        for (int j = 0; j < hh; ++j) {
            const Real vhat = p.head_w2.v[static_cast<size_t>(j) * K + k] / wn;
            du[j] += dlogits[k] * vhat;
            grads.head_w2.v[static_cast<size_t>(j) * K + k] +=
                scale * (acts.head_h_unit[j] - vhat * cos_k);
        }
    }
    std::vector<Real> dh_act(hh, Real(0));
    if (acts.head_h_norm > Real(1e-12)) {
        Real udot(0);
        for (int j = 0; j < hh; ++j) udot += acts.head_h_unit[j] * du[j];
        for (int j = 0; j < hh; ++j)
            dh_act[j] = (du[j] - acts.head_h_unit[j] * udot) / acts.head_h_norm;
    }

    std::vector<Real> dh_pre(hh);
    for (int j = 0; j < hh; ++j) dh_pre[j] = dh_act[j] * gelu_grad(acts.head_h_pre[j]);

    std::vector<Real> dlnf_out(d, Real(0));
    matmul_a_bt(dh_pre.data(), p.head_w1.data(), dlnf_out.data(), 1, hh, d);
    matmul_at_b(acts.lnf_out.data(), dh_pre.data(), grads.head_w1.data(), 1, d, hh);
    for (int j = 0; j < hh; ++j) grads.head_b1.v[j] += dh_pre[j];

    // head-input LN (class row only)
    Tensor<Real> dx = Tensor<Real>::zeros({n, d});
    {
        Real sum_dh(0), sum_dh_h(0);
        for (int j = 0; j < d; ++j) {
            grads.lnf_g.v[j] += dlnf_out[j] * acts.lnf_xhat[j];
            grads.lnf_b.v[j] += dlnf_out[j];
            const Real t = dlnf_out[j] * p.lnf_g.v[j];
            sum_dh += t;
            sum_dh_h += t * acts.lnf_xhat[j];
        }
        const Real m1 = sum_dh / Real(d);
        const Real m2 = sum_dh_h / Real(d);
        for (int j = 0; j < d; ++j) {
            const Real t = dlnf_out[j] * p.lnf_g.v[j];
            dx.v[j] += acts.lnf_invstd * (t - m1 - acts.lnf_xhat[j] * m2);
        }
    }

    // Blocks, reversed
    for (int b = cfg.depth - 1; b >= 0; --b) {
        auto& blk = p.blocks[b];
        auto& gblk = grads.blocks[b];
        auto& ba = acts.blocks[b];

        // x_out = y + h_act . w2 + b2
        Tensor<Real> dh_act2 = Tensor<Real>::zeros({n, hd});
        matmul_a_bt(dx.data(), blk.w2.data(), dh_act2.data(), n, d, hd);
        matmul_at_b(ba.h_act.data(), dx.data(), gblk.w2.data(), n, hd, d);
        add_colsum(dx.data(), gblk.b2.data(), n, d);

        for (size_t i = 0; i < dh_act2.size(); ++i)
            dh_act2.v[i] *= gelu_grad(ba.h_pre.v[i]);

        Tensor<Real> dln2_out = Tensor<Real>::zeros({n, d});
        matmul_a_bt(dh_act2.data(), blk.w1.data(), dln2_out.data(), n, hd, d);
        matmul_at_b(ba.ln2_out.data(), dh_act2.data(), gblk.w1.data(), n, d, hd);
        add_colsum(dh_act2.data(), gblk.b1.data(), n, hd);

        // dy = dx (residual) + LN2 backward
        Tensor<Real> dy = dx;
        layer_norm_backward_rows(dln2_out, ba.ln2_xhat, ba.ln2_invstd, blk.ln2_g, n, d,
                                 gblk.ln2_g, gblk.ln2_b, dy);

        // y = x_in + attn_concat . wo + bo
        Tensor<Real> dattn_concat = Tensor<Real>::zeros({n, d});
        matmul_a_bt(dy.data(), blk.wo.data(), dattn_concat.data(), n, d, d);
        matmul_at_b(ba.attn_concat.data(), dy.data(), gblk.wo.data(), n, d, d);
        add_colsum(dy.data(), gblk.bo.data(), n, d);

        Tensor<Real> dq = Tensor<Real>::zeros({n, d});
        Tensor<Real> dk = Tensor<Real>::zeros({n, d});
        Tensor<Real> dv = Tensor<Real>::zeros({n, d});
        std::vector<Real> dA(static_cast<size_t>(n) * n);
        for (int h = 0; h < cfg.heads; ++h) {
            const Real* A = ba.attn.data() + static_cast<size_t>(h) * n * n;
            // dA = dO_h . V_h^T ; dV_h += A^T . dO_h
            for (int i = 0; i < n; ++i) {
                const Real* doi = dattn_concat.data() + static_cast<size_t>(i) * d + h * dh;
                Real* dai = dA.data() + static_cast<size_t>(i) * n;
                for (int j = 0; j < n; ++j) {
                    const Real* vj = ba.v.data() + static_cast<size_t>(j) * d + h * dh;
                    Real acc(0);
                    for (int t = 0; t < dh; ++t) acc += doi[t] * vj[t];
                    dai[j] = acc;
                }
            }
            for (int j = 0; j < n; ++j) {
                Real* dvj = dv.data() + static_cast<size_t>(j) * d + h * dh;
                for (int i = 0; i < n; ++i) {
                    const Real aij = A[static_cast<size_t>(i) * n + j];
                    if (aij == Real(0)) continue;
                    const Real* doi = dattn_concat.data() + static_cast<size_t>(i) * d + h * dh;
                    for (int t = 0; t < dh; ++t) dvj[t] += aij * doi[t];
                }
            }
            // softmax backward rows: dS = A * (dA - rowsum(dA * A))
            for (int i = 0; i < n; ++i) {
                const Real* ai = A + static_cast<size_t>(i) * n;
                Real* dai = dA.data() + static_cast<size_t>(i) * n;
                Real dot(0);
                for (int j = 0; j < n; ++j) dot += dai[j] * ai[j];
                for (int j = 0; j < n; ++j) dai[j] = ai[j] * (dai[j] - dot);
            }
            // dQ_h += dS . K_h * inv_sqrt_dh ; dK_h += dS^T . Q_h * inv_sqrt_dh
            for (int i = 0; i < n; ++i) {
                const Real* dsi = dA.data() + static_cast<size_t>(i) * n;
                Real* dqi = dq.data() + static_cast<size_t>(i) * d + h * dh;
                for (int j = 0; j < n; ++j) {
                    const Real s = dsi[j] * inv_sqrt_dh;
                    if (s == Real(0)) continue;
                    const Real* kj = ba.k.data() + static_cast<size_t>(j) * d + h * dh;
                    for (int t = 0; t < dh; ++t) dqi[t] += s * kj[t];
                    Real* dkj = dk.data() + static_cast<size_t>(j) * d + h * dh;
                    const Real* qi = ba.q.data() + static_cast<size_t>(i) * d + h * dh;
                    for (int t = 0; t < dh; ++t) dkj[t] += s * qi[t];
                }
            }
        }

        Tensor<Real> dln1_out = Tensor<Real>::zeros({n, d});
        matmul_a_bt(dq.data(), blk.wq.data(), dln1_out.data(), n, d, d);
        matmul_at_b(ba.ln1_out.data(), dq.data(), gblk.wq.data(), n, d, d);
        add_colsum(dq.data(), gblk.bq.data(), n, d);
        matmul_a_bt(dk.data(), blk.wk.data(), dln1_out.data(), n, d, d);
        matmul_at_b(ba.ln1_out.data(), dk.data(), gblk.wk.data(), n, d, d);
        add_colsum(dk.data(), gblk.bk.data(), n, d);
        matmul_a_bt(dv.data(), blk.wv.data(), dln1_out.data(), n, d, d);
        matmul_at_b(ba.ln1_out.data(), dv.data(), gblk.wv.data(), n, d, d);
        add_colsum(dv.data(), gblk.bv.data(), n, d);

        // dx_in = dy (residual) + LN1 backward
        layer_norm_backward_rows(dln1_out, ba.ln1_xhat, ba.ln1_invstd, blk.ln1_g, n, d,
                                 gblk.ln1_g, gblk.ln1_b, dy);
        dx = dy;
    }

    // Embedding stage
    for (int j = 0; j < d; ++j) grads.cls.v[j] += dx.v[j];

    if (acts.g_in == p.pos_grid) {
        for (size_t i = 0; i < dx.size(); ++i) grads.pos.v[i] += dx.v[i];
    } else {
        interp_pos_embed_backward(dx, p.pos_grid, acts.g_in, d, grads.pos);
    }

    matmul_at_b(acts.patches.data(), dx.data() + d, grads.patch_w.data(),
                np, cfg.patch * cfg.patch * cfg.channels, d);
    add_colsum(dx.data() + d, grads.patch_b.data(), np, d);
}

}  // namespace freqvit::ssl
