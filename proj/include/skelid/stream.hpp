#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "skelid/attention.hpp"
#include "skelid/graph_conv.hpp"
#include "skelid/layers.hpp"
#include "skelid/presets.hpp"

namespace skelid {

// The two branches of the model: per-frame attention over keypoints
// (spatial) and per-keypoint attention over frames (temporal).
enum class StreamKind { spatial, temporal };

inline const char* stream_kind_name(StreamKind k) {
    return k == StreamKind::spatial ? "str" : "ttr";
}

struct StreamConfig {
    StreamKind kind = StreamKind::spatial;
    std::int64_t num_classes = 0;
    std::int64_t vertex_count = 0;
    std::vector<std::int64_t> stem_channels;  // starts at 3 (x, y, confidence)
    std::vector<std::int64_t> stem_strides;   // one per block; empty = all 1
    std::int64_t stem_temporal_kernel = 9;
    std::int64_t attention_layers = 2;
    std::int64_t heads = 8;
    double dk_ratio = 0.25;
    double dv_ratio = 0.25;
    std::int64_t embedding_dim = 256;

    std::int64_t model_channels() const {
        return stem_channels.empty() ? 0 : stem_channels.back();
    }

    void validate() const {
        if (num_classes < 2) throw ValidationError("stream needs at least 2 classes");
        if (vertex_count < 1) throw ValidationError("stream needs at least 1 vertex");
        if (stem_channels.size() < 2)
            throw ValidationError("stem_channels must list input and at least one block width");
        if (stem_channels.front() != 3)
            throw ValidationError("stem input width must be 3 (x, y, confidence), got " +
                                  std::to_string(stem_channels.front()));
        for (std::int64_t c : stem_channels)
            if (c < 1) throw ValidationError("stem channel widths must be positive");
        if (!stem_strides.empty() && stem_strides.size() != stem_channels.size() - 1)
            throw ValidationError("stem_strides must have one entry per stem block");
        for (std::int64_t s : stem_strides)
            if (s < 1) throw ValidationError("stem strides must be >= 1");
        if (stem_temporal_kernel < 1 || stem_temporal_kernel % 2 == 0)
            throw ValidationError("stem_temporal_kernel must be odd");
        if (attention_layers < 0) throw ValidationError("attention_layers must be >= 0");
        if (heads < 1) throw ValidationError("heads must be >= 1");
        if (embedding_dim < 1) throw ValidationError("embedding_dim must be >= 1");
        AttentionConfig probe{heads, dk_ratio, dv_ratio, model_channels()};
        probe.validate();
    }
};

// Desk-scale defaults. The spatial stream works frame-locally (temporal
// kernel 1) and leans on the skeleton graph; the temporal stream has a
// shallower stem whose order-sensitivity comes from 9-tap temporal
// convolutions, with no graph edges (each keypoint trajectory is processed
// on its own).
inline StreamConfig default_stream_config(StreamKind kind, std::int64_t num_classes,
                                          std::int64_t vertex_count) {
    StreamConfig cfg;
    cfg.kind = kind;
    cfg.num_classes = num_classes;
    cfg.vertex_count = vertex_count;
    if (kind == StreamKind::spatial) {
        cfg.stem_channels = {3, 16, 32, 64};
        cfg.stem_temporal_kernel = 1;
    } else {
        cfg.stem_channels = {3, 32, 64};
        cfg.stem_temporal_kernel = 9;
    }
    return cfg;
}

struct StreamOutput {
    Val logits;     // [B, K]
    Val embedding;  // [B, embedding_dim], pre-normalization
};

// One full branch: ST-GCN stem -> attention blocks -> global average pool
// over (T, V) -> embedding layer -> linear classifier. The classifier starts
// near zero so an untrained model predicts the uniform distribution.
class StreamModel {
  public:
    StreamModel(const StreamConfig& config, const SkeletonGraph& skeleton, std::uint64_t seed)
        : cfg_(validated(config)),
          graph_(config.kind == StreamKind::spatial ? skeleton
                                                    : edgeless_graph(config.vertex_count)),
          embed_(prefix() + ".embed", config.embedding_dim, config.stem_channels.back(), seed),
          classifier_(prefix() + ".classifier", config.num_classes, config.embedding_dim, seed,
                      0.01) {
        if (graph_.vertex_count != cfg_.vertex_count)
            throw ValidationError("graph has " + std::to_string(graph_.vertex_count) +
                                  " vertices but the stream expects " +
                                  std::to_string(cfg_.vertex_count));
        const std::size_t blocks = cfg_.stem_channels.size() - 1;
        for (std::size_t i = 0; i < blocks; ++i) {
            STGCNBlockConfig bc;
            bc.in_channels = cfg_.stem_channels[i];
            bc.out_channels = cfg_.stem_channels[i + 1];
            bc.temporal_kernel = cfg_.stem_temporal_kernel;
            bc.temporal_stride = cfg_.stem_strides.empty() ? 1 : cfg_.stem_strides[i];
            bc.residual = true;
            stem_.emplace_back(prefix() + ".stem" + std::to_string(i), bc, seed);
        }
        AttentionConfig ac{cfg_.heads, cfg_.dk_ratio, cfg_.dv_ratio, cfg_.model_channels()};
        const AttentionAxis axis = cfg_.kind == StreamKind::spatial ? AttentionAxis::spatial
                                                                   : AttentionAxis::temporal;
        for (std::int64_t i = 0; i < cfg_.attention_layers; ++i)
            attention_.emplace_back(prefix() + ".attn" + std::to_string(i), ac, axis, seed);
    }

    const StreamConfig& config() const { return cfg_; }
    const SkeletonGraph& graph() const { return graph_; }
    std::string prefix() const { return stream_kind_name(cfg_.kind); }

    StreamOutput forward(Tape& t, Val input, bool training) {
        const Tensor& xv = t.value(input);
        if (xv.ndim() != 5 || xv.dim(1) != 3 || xv.dim(4) != 1)
            throw ShapeError("stream input must be [B, 3, T, V, 1], got " + shape_str(xv.shape()));
        if (xv.dim(3) != cfg_.vertex_count)
            throw ShapeError("stream input has " + std::to_string(xv.dim(3)) +
                             " vertices, model expects " + std::to_string(cfg_.vertex_count));
        const std::int64_t b = xv.dim(0), tt = xv.dim(2), v = xv.dim(3);
        Val x = reshape(t, input, {b, 3, tt, v});
        for (auto& block : stem_) x = block.forward(t, x, graph_, training);
        for (auto& layer : attention_) x = layer.forward(t, x, training);
        const Tensor& hv = t.value(x);
        Val pooled = mean_last(t, reshape(t, x, {b, hv.dim(1), hv.dim(2) * hv.dim(3)}));
        StreamOutput out;
        out.embedding = embed_.forward(t, pooled);
        out.logits = classifier_.forward(t, out.embedding);
        return out;
    }

    void collect(std::vector<Parameter*>& params) {
        for (auto& block : stem_) block.collect(params);
        for (auto& layer : attention_) layer.collect(params);
        embed_.collect(params);
        classifier_.collect(params);
    }
    void collect_state(StateDict& state) {
        for (auto& block : stem_) block.collect_state(state);
        for (auto& layer : attention_) layer.collect_state(state);
        embed_.collect_state(state);
        classifier_.collect_state(state);
    }

  private:
    static const StreamConfig& validated(const StreamConfig& c) {
        c.validate();
        return c;
    }

    StreamConfig cfg_;
    SkeletonGraph graph_;
    std::vector<STGCNBlockParams> stem_;
    std::vector<AttentionBlockParams> attention_;
    LinearParams embed_;
    LinearParams classifier_;
};

}  // namespace skelid
