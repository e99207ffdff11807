#include "strukt/model.hpp"

#include <cmath>
#include <mutex>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "strukt/error.hpp"
#include "strukt/rng.hpp"

namespace strukt {

void EncoderConfig::validate() const {
    if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0)
        throw ConfigError("encoder: d_model must be a positive multiple of n_heads");
    if (stem_stride < 1) throw ConfigError("encoder: stem_stride must be >= 1");
    if (conv_kernel < 1 || conv_kernel % 2 == 0)
        throw ConfigError("encoder: conv_kernel must be odd");
    if (n_backbone_blocks < 0 || n_head_blocks < 0)
        throw ConfigError("encoder: block counts must be non-negative");
    if (ff_mult < 1) throw ConfigError("encoder: ff_mult must be >= 1");
    if (n_classes < 1) throw ConfigError("encoder: n_classes must be >= 1");
    if (proj_dim < 1) throw ConfigError("encoder: proj_dim must be >= 1");
    if (n_mels < 1) throw ConfigError("encoder: n_mels must be >= 1");
}

int ParamStore::add(const std::string& name, int rows, int cols, Init init) {
    Entry e;
    e.name = name;
    e.offset = static_cast<int>(values_.size());
    e.rows = rows;
    e.cols = cols;
    e.init = init;
    entries_.push_back(e);
    values_.resize(values_.size() + e.size(), 0.0);
    return static_cast<int>(entries_.size()) - 1;
}

std::span<const double> ParamStore::view(int idx) const {
    const Entry& e = entries_[static_cast<std::size_t>(idx)];
    return {values_.data() + e.offset, e.size()};
}

void ParamStore::initialize(std::uint64_t seed) {
    init_seed_ = seed;
    Rng rng(seed);
    for (const Entry& e : entries_) {
        double* v = values_.data() + e.offset;
        switch (e.init) {
            case Init::kZeros:
                for (std::size_t i = 0; i < e.size(); ++i) v[i] = 0.0;
                break;
            case Init::kOnes:
                for (std::size_t i = 0; i < e.size(); ++i) v[i] = 1.0;
                break;
            case Init::kUniformFanInOut: {
                const double bound = std::sqrt(6.0 / (e.rows + e.cols));
                for (std::size_t i = 0; i < e.size(); ++i)
                    v[i] = rng.uniform(-bound, bound);
                break;
            }
            case Init::kUniformKernel: {
                const double bound = std::sqrt(6.0 / (e.rows + 1));
                for (std::size_t i = 0; i < e.size(); ++i)
                    v[i] = rng.uniform(-bound, bound);
                break;
            }
        }
    }
}

namespace {

// Sinusoidal absolute positions. The table is grown once to the longest
// requested length and shared; position p is encoded the same regardless of
// sequence length, so every window reads a prefix of the same table.
Tensor positional_encoding(int length, int d_model) {
    static std::mutex mutex;
    static Tensor cache;
    std::lock_guard<std::mutex> lock(mutex);
    if (cache.cols != d_model || cache.rows < length) {
        const int rows = std::max(length, cache.cols == d_model ? cache.rows : 0);
        cache = Tensor(rows, d_model);
        for (int p = 0; p < rows; ++p)
            for (int i = 0; i < d_model; ++i) {
                const double exponent = static_cast<double>(2 * (i / 2)) / d_model;
                const double angle = p / std::pow(10000.0, exponent);
                cache.at(p, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
            }
    }
    Tensor out(length, d_model);
    for (int p = 0; p < length; ++p)
        for (int i = 0; i < d_model; ++i) out.at(p, i) = cache.at(p, i);
    return out;
}

}  // namespace

void tune_allocator_for_training() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_MAX, 0);
    mallopt(M_TRIM_THRESHOLD, -1);
#endif
}

Encoder::Encoder(EncoderConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    build_layout();
    params_.initialize(init_seed);
}

Encoder::Encoder(EncoderConfig cfg, std::vector<double> flat_params) : cfg_(cfg) {
    cfg_.validate();
    build_layout();
    if (flat_params.size() != params_.total())
        throw ConfigError("encoder: parameter vector size " + std::to_string(flat_params.size()) +
                          " does not match config layout " + std::to_string(params_.total()));
    params_.values() = std::move(flat_params);
}

void Encoder::build_layout() {
    using Init = ParamStore::Init;
    auto& ps = params_;
    const int d = cfg_.d_model;
    const int ff = cfg_.ff_mult * d;
    const int k = cfg_.conv_kernel;

    auto ln = [&](const std::string& base) {
        ps.add(base + ".gain", 1, d, Init::kOnes);
        ps.add(base + ".bias", 1, d, Init::kZeros);
    };
    auto linear = [&](const std::string& base, int in, int out) {
        ps.add(base + ".w", in, out, Init::kUniformFanInOut);
        ps.add(base + ".b", 1, out, Init::kZeros);
    };

    ps.add("stem.dw", k, cfg_.n_mels, Init::kUniformKernel);
    linear("stem.pw", cfg_.n_mels, d);

    auto ff_sublayer = [&](const std::string& base) {
        ln(base + ".ln");
        linear(base + ".w1", d, ff);
        linear(base + ".w2", ff, d);
    };
    auto attn_sublayer = [&](const std::string& base) {
        ln(base + ".ln");
        linear(base + ".q", d, d);
        linear(base + ".k", d, d);
        linear(base + ".v", d, d);
        linear(base + ".o", d, d);
    };

    for (int b = 0; b < cfg_.n_backbone_blocks; ++b) {
        const std::string base = "backbone" + std::to_string(b);
        ff_sublayer(base + ".ff1");
        attn_sublayer(base + ".attn");
        ln(base + ".conv.ln");
        linear(base + ".conv.pw1", d, 2 * d);
        ps.add(base + ".conv.dw", k, d, Init::kUniformKernel);
        ps.add(base + ".conv.dwb", 1, d, Init::kZeros);
        ln(base + ".conv.ln2");
        linear(base + ".conv.pw2", d, d);
        ff_sublayer(base + ".ff2");
    }
    for (int b = 0; b < cfg_.n_head_blocks; ++b) {
        const std::string base = "head" + std::to_string(b);
        attn_sublayer(base + ".attn");
        ff_sublayer(base + ".ff");
    }
    ln("final.ln");
    linear("out.boundary", d, 1);
    linear("out.function", d, cfg_.n_classes);
    // No bias on the projection: the contrastive loss only sees differences
    // of projected embeddings, so a bias could never receive gradient.
    ps.add("out.proj.w", d, cfg_.proj_dim, Init::kUniformFanInOut);

    order_.resize(ps.entries().size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[static_cast<std::size_t>(i)] = static_cast<int>(i);
}

int Encoder::p(Tape& tape, int entry_idx) const {
    const auto& e = params_.entry(entry_idx);
    return tape.param(params_.view(entry_idx), e.rows, e.cols, e.offset);
}

Encoder::Outputs Encoder::forward(Tape& tape, const Tensor& mel) const {
    if (mel.cols != cfg_.n_mels)
        throw ConfigError("encoder: mel band count " + std::to_string(mel.cols) +
                          " does not match config n_mels " + std::to_string(cfg_.n_mels));
    if (mel.rows < cfg_.stem_stride)
        throw InputError("encoder: need at least stem_stride mel frames");

    // Entries were registered in a fixed order; consume them in that order.
    int next = 0;
    auto take = [&]() { return p(tape, order_[static_cast<std::size_t>(next++)]); };

    const int d = cfg_.d_model;
    const int dh = d / cfg_.n_heads;
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    auto ln_apply = [&](int x) {
        const int g = take();
        const int b = take();
        return tape.layernorm_rows(x, g, b);
    };
    auto linear_apply = [&](int x) {
        const int w = take();
        const int b = take();
        return tape.add_rowvec(tape.matmul(x, w), b);
    };
    auto ff_apply = [&](int x, double step) {
        int h = ln_apply(x);
        h = linear_apply(h);
        h = tape.gelu(h);
        h = linear_apply(h);
        return tape.add_scaled(x, h, step);
    };
    auto attn_apply = [&](int x) {
        int h = ln_apply(x);
        const int q = linear_apply(h);
        const int key = linear_apply(h);
        const int v = linear_apply(h);
        std::vector<int> ctx;
        for (int head = 0; head < cfg_.n_heads; ++head) {
            const int c0 = head * dh, c1 = (head + 1) * dh;
            const int qh = tape.slice_cols(q, c0, c1);
            const int kh = tape.slice_cols(key, c0, c1);
            const int vh = tape.slice_cols(v, c0, c1);
            const int scores = tape.affine(tape.matmul(qh, kh, false, true), att_scale, 0.0);
            tape.set_tag(scores, Tape::Tag::kAttentionScores);
            const int probs = tape.softmax_rows(scores);
            tape.set_tag(probs, Tape::Tag::kAttentionProbs);
            ctx.push_back(tape.matmul(probs, vh));
        }
        const int merged = cfg_.n_heads == 1 ? ctx[0] : tape.concat_cols(ctx);
        const int o = linear_apply(merged);
        return tape.add(x, o);
    };
    auto conv_apply = [&](int x) {
        int h = ln_apply(x);
        h = linear_apply(h);   // pointwise d -> 2d
        h = tape.glu(h);       // gate back to d
        const int dw = take();
        h = tape.depthwise_conv1d(h, dw, 1);
        const int dwb = take();
        h = tape.add_rowvec(h, dwb);
        h = ln_apply(h);       // layernorm in place of batchnorm
        h = tape.gelu(h);
        h = linear_apply(h);   // pointwise d -> d
        return tape.add(x, h);
    };

    // Stem: strided depthwise over time, pointwise to d_model, positions.
    const int mel_in = tape.input(mel);
    const int stem_dw = take();
    int x = tape.depthwise_conv1d(mel_in, stem_dw, cfg_.stem_stride);
    x = linear_apply(x);
    const int l_out = tape.value(x).rows;
    x = tape.add(x, tape.input(positional_encoding(l_out, d)));

    for (int b = 0; b < cfg_.n_backbone_blocks; ++b) {
        x = ff_apply(x, 0.5);
        x = attn_apply(x);
        x = conv_apply(x);
        x = ff_apply(x, 0.5);
    }
    for (int b = 0; b < cfg_.n_head_blocks; ++b) {
        x = attn_apply(x);
        x = ff_apply(x, 1.0);
    }
    const int encoded = ln_apply(x);

    Outputs out;
    out.boundary_logits = linear_apply(encoded);
    out.function_logits = linear_apply(encoded);
    out.embeddings = encoded;
    // Everything but the projection weights must be consumed by now; a
    // mismatch means the layout and the graph went out of sync.
    if (static_cast<std::size_t>(next) + 1 != order_.size())
        throw ContractError("encoder: layout/forward mismatch");
    return out;
}

std::vector<int> Encoder::project_embeddings(Tape& tape, int embeddings,
                                             const std::vector<std::pair<int, int>>& spans) const {
    const int l_out = tape.value(embeddings).rows;
    // out.proj.w is the last registered entry.
    const int w = p(tape, static_cast<int>(params_.entries().size()) - 1);

    std::vector<int> out;
    out.reserve(spans.size());
    for (const auto& [begin, end] : spans) {
        if (begin < 0 || end > l_out || begin >= end)
            throw InputError("project_embeddings: empty or out-of-range span");
        const int m = tape.mean_rows_range(embeddings, begin, end);
        out.push_back(tape.matmul(m, w));
    }
    return out;
}

double grad_check(const std::function<double(std::span<const double>)>& f,
                  std::span<const double> analytic_grad, std::span<double> params, int n_probes,
                  double eps, std::uint64_t seed) {
    if (analytic_grad.size() != params.size())
        throw ContractError("grad_check: gradient/parameter size mismatch");
    Rng rng(seed);
    double worst = 0.0;
    for (int probe = 0; probe < n_probes; ++probe) {
        const auto i = static_cast<std::size_t>(rng.uniform_index(params.size()));
        const double saved = params[i];
        params[i] = saved + eps;
        const double up = f(params);
        params[i] = saved - eps;
        const double down = f(params);
        params[i] = saved;
        const double fd = (up - down) / (2.0 * eps);
        const double ad = analytic_grad[i];
        const double denom = std::max({std::abs(fd), std::abs(ad), 1e-3});
        worst = std::max(worst, std::abs(fd - ad) / denom);
    }
    return worst;
}

}  // namespace strukt
