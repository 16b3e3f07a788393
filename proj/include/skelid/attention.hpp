#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "skelid/layers.hpp"

namespace skelid {

// Multi-head attention geometry. Total key/value widths are the requested
// ratio of the model width, rounded to the nearest positive multiple of the
// head count so each head gets an equal slice.
struct AttentionConfig {
    std::int64_t heads = 8;
    double dk_ratio = 0.25;
    double dv_ratio = 0.25;
    std::int64_t model_channels = 0;

    static std::int64_t rounded_width(double ratio, std::int64_t channels, std::int64_t heads) {
        const double want = ratio * static_cast<double>(channels);
        std::int64_t per_head = static_cast<std::int64_t>(
            std::llround(want / static_cast<double>(heads)));
        if (per_head < 1) per_head = 1;
        return per_head * heads;
    }

    std::int64_t dk_total() const { return rounded_width(dk_ratio, model_channels, heads); }
    std::int64_t dv_total() const { return rounded_width(dv_ratio, model_channels, heads); }
    std::int64_t dk_per_head() const { return dk_total() / heads; }
    std::int64_t dv_per_head() const { return dv_total() / heads; }

    void validate() const {
        if (heads < 1) throw ValidationError("attention needs at least one head");
        if (model_channels < 1) throw ValidationError("model_channels must be >= 1");
        if (!(dk_ratio > 0.0) || !(dv_ratio > 0.0))
            throw ValidationError("attention dimension ratios must be positive");
        if (dk_total() % heads != 0 || dv_total() % heads != 0)
            throw ValidationError("attention widths must divide evenly across heads");
    }
};

// --------------------------- token rearrangement ---------------------------
// The streams keep activations as [B, C, T, V]. Attention itself runs on
// token rows [N, L, C]: spatial attention treats the V keypoints of each
// frame as tokens (N = B*T), temporal attention the T frames of each
// keypoint (N = B*V).

inline Val spatial_tokens(Tape& t, Val x) {
    const Tensor& xv = t.value(x);
    if (xv.ndim() != 4) throw ShapeError("expected [B, C, T, V], got " + shape_str(xv.shape()));
    const std::int64_t b = xv.dim(0), c = xv.dim(1), tt = xv.dim(2), v = xv.dim(3);
    return reshape(t, permute(t, x, {0, 2, 3, 1}), {b * tt, v, c});
}

inline Val spatial_tokens_back(Tape& t, Val tokens, std::int64_t b, std::int64_t tt, std::int64_t v) {
    const Tensor& tv = t.value(tokens);
    if (tv.ndim() != 3) throw ShapeError("expected [N, L, C], got " + shape_str(tv.shape()));
    const std::int64_t c = tv.dim(2);
    return permute(t, reshape(t, tokens, {b, tt, v, c}), {0, 3, 1, 2});
}

inline Val temporal_tokens(Tape& t, Val x) {
    const Tensor& xv = t.value(x);
    if (xv.ndim() != 4) throw ShapeError("expected [B, C, T, V], got " + shape_str(xv.shape()));
    const std::int64_t b = xv.dim(0), c = xv.dim(1), tt = xv.dim(2), v = xv.dim(3);
    return reshape(t, permute(t, x, {0, 3, 2, 1}), {b * v, tt, c});
}

inline Val temporal_tokens_back(Tape& t, Val tokens, std::int64_t b, std::int64_t tt, std::int64_t v) {
    const Tensor& tv = t.value(tokens);
    if (tv.ndim() != 3) throw ShapeError("expected [N, L, C], got " + shape_str(tv.shape()));
    const std::int64_t c = tv.dim(2);
    return permute(t, reshape(t, tokens, {b, v, tt, c}), {0, 3, 2, 1});
}

namespace detail {

// [N, L, width] -> [N, H, L, width/H]: split the feature axis into heads.
inline Val split_heads(Tape& t, Val x, std::int64_t heads) {
    const Tensor& xv = t.value(x);
    const std::int64_t n = xv.dim(0), l = xv.dim(1), w = xv.dim(2);
    return permute(t, reshape(t, x, {n, l, heads, w / heads}), {0, 2, 1, 3});
}

// [N, H, L, d] -> [N, L, H*d]: concatenate head outputs feature-wise.
inline Val merge_heads(Tape& t, Val x) {
    const Tensor& xv = t.value(x);
    const std::int64_t n = xv.dim(0), h = xv.dim(1), l = xv.dim(2), d = xv.dim(3);
    return reshape(t, permute(t, x, {0, 2, 1, 3}), {n, l, h * d});
}

}  // namespace detail

// Softmaxed attention matrices for token rows: [N, H, L, L], each row the
// softmax of q·kᵀ/sqrt(d_per_head). Exposed separately so tests can compare
// against an independent brute-force attention computation.
inline Val attention_scores_tokens(Tape& t, Val tokens, const AttentionConfig& cfg, Val wq, Val wk) {
    cfg.validate();
    const Tensor& tv = t.value(tokens);
    if (tv.ndim() != 3) throw ShapeError("expected [N, L, C] tokens, got " + shape_str(tv.shape()));
    if (tv.dim(2) != cfg.model_channels)
        throw ShapeError("tokens have " + std::to_string(tv.dim(2)) + " channels, config expects " +
                         std::to_string(cfg.model_channels));
    Val q = detail::split_heads(t, matmul(t, tokens, wq), cfg.heads);  // [N, H, L, d]
    Val k = detail::split_heads(t, matmul(t, tokens, wk), cfg.heads);
    Val logits = matmul(t, q, transpose_last2(t, k));  // [N, H, L, L]
    logits = scale(t, logits, 1.0 / std::sqrt(static_cast<double>(cfg.dk_per_head())));
    return softmax_rows(t, logits);
}

// Full multi-head attention on token rows: scores · projected values, heads
// concatenated, then the output projection back to model_channels. All four
// projections are bias-free.
inline Val multi_head_attention_tokens(Tape& t, Val tokens, const AttentionConfig& cfg, Val wq,
                                       Val wk, Val wv, Val wo) {
    Val scores = attention_scores_tokens(t, tokens, cfg, wq, wk);
    Val values = detail::split_heads(t, matmul(t, tokens, wv), cfg.heads);  // [N, H, L, dv]
    Val mixed = detail::merge_heads(t, matmul(t, scores, values));          // [N, L, dv_total]
    return matmul(t, mixed, wo);                                            // [N, L, C]
}

// Per-frame attention over keypoints: every frame of every batch item is an
// independent token row.
inline Val spatial_self_attention(Tape& t, Val x, const AttentionConfig& cfg, Val wq, Val wk, Val wv,
                                  Val wo) {
    const Tensor& xv = t.value(x);
    if (xv.ndim() != 4) throw ShapeError("expected [B, C, T, V], got " + shape_str(xv.shape()));
    const std::int64_t b = xv.dim(0), tt = xv.dim(2), v = xv.dim(3);
    Val out = multi_head_attention_tokens(t, spatial_tokens(t, x), cfg, wq, wk, wv, wo);
    return spatial_tokens_back(t, out, b, tt, v);
}

// Per-keypoint attention over frames: every keypoint trajectory is an
// independent token row.
inline Val temporal_self_attention(Tape& t, Val x, const AttentionConfig& cfg, Val wq, Val wk,
                                   Val wv, Val wo) {
    const Tensor& xv = t.value(x);
    if (xv.ndim() != 4) throw ShapeError("expected [B, C, T, V], got " + shape_str(xv.shape()));
    const std::int64_t b = xv.dim(0), tt = xv.dim(2), v = xv.dim(3);
    Val out = multi_head_attention_tokens(t, temporal_tokens(t, x), cfg, wq, wk, wv, wo);
    return temporal_tokens_back(t, out, b, tt, v);
}

enum class AttentionAxis { spatial, temporal };

// Residual attention block: y = relu(batch_norm(attention(x)) + x).
struct AttentionBlockParams {
    AttentionConfig cfg;
    AttentionAxis axis;
    Parameter wq, wk, wv, wo;
    BatchNormParams bn;

    AttentionBlockParams(const std::string& name, const AttentionConfig& config, AttentionAxis ax,
                         std::uint64_t seed)
        : cfg(config),
          axis(ax),
          wq(name + ".wq", fan_in_uniform({config.model_channels, config.dk_total()},
                                          config.model_channels, seed, name + ".wq")),
          wk(name + ".wk", fan_in_uniform({config.model_channels, config.dk_total()},
                                          config.model_channels, seed, name + ".wk")),
          wv(name + ".wv", fan_in_uniform({config.model_channels, config.dv_total()},
                                          config.model_channels, seed, name + ".wv")),
          wo(name + ".wo", fan_in_uniform({config.dv_total(), config.model_channels},
                                          config.dv_total(), seed, name + ".wo")),
          bn(name + ".bn", config.model_channels) {
        cfg.validate();
    }

    Val forward(Tape& t, Val x, bool training) {
        Val q = t.param(wq), k = t.param(wk), v = t.param(wv), o = t.param(wo);
        Val attended = axis == AttentionAxis::spatial
                           ? spatial_self_attention(t, x, cfg, q, k, v, o)
                           : temporal_self_attention(t, x, cfg, q, k, v, o);
        return relu(t, add(t, bn.forward(t, attended, training), x));
    }

    void collect(std::vector<Parameter*>& params) {
        params.push_back(&wq);
        params.push_back(&wk);
        params.push_back(&wv);
        params.push_back(&wo);
        bn.collect(params);
    }
    void collect_state(StateDict& state) {
        state.push_back({wq.name, &wq.value});
        state.push_back({wk.name, &wk.value});
        state.push_back({wv.name, &wv.value});
        state.push_back({wo.name, &wo.value});
        bn.collect_state(state);
    }
};

}  // namespace skelid
