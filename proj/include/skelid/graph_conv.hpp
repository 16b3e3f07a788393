#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "skelid/layers.hpp"
#include "skelid/skeleton_graph.hpp"

namespace skelid {

struct STGCNBlockConfig {
    std::int64_t in_channels = 0;
    std::int64_t out_channels = 0;
    std::int64_t temporal_kernel = 9;
    std::int64_t temporal_stride = 1;
    bool residual = true;

    void validate() const {
        if (in_channels < 1 || out_channels < 1)
            throw ValidationError("graph block channels must be >= 1");
        if (temporal_kernel < 1 || temporal_kernel % 2 == 0)
            throw ValidationError("temporal_kernel must be odd and positive, got " +
                                  std::to_string(temporal_kernel));
        if (temporal_stride < 1) throw ValidationError("temporal_stride must be >= 1");
    }
};

// Graph convolution over one frame at a time: vertex mixing by the
// normalized adjacency, then channel mixing by a learned [C_out, C_in]
// weight. With the identity adjacency this is exactly a per-vertex linear
// map.
inline Val spatial_graph_conv(Tape& t, Val x, const SkeletonGraph& graph, Val weight) {
    const Tensor& xv = t.value(x);
    if (xv.ndim() != 4)
        throw ShapeError("spatial_graph_conv expects [B, C, T, V], got " + shape_str(xv.shape()));
    if (xv.dim(3) != graph.vertex_count)
        throw ShapeError("input has " + std::to_string(xv.dim(3)) + " vertices but the graph has " +
                         std::to_string(graph.vertex_count));
    return channel_mix(t, vertex_mix(t, x, graph.normalized_adjacency), weight);
}

// One feature-extraction block:
//   y = batch_norm(temporal_conv(relu(spatial_graph_conv(x)))) + skip
// where the skip is the input when shapes allow, a strided 1x1 projection
// otherwise, and absent when the residual is disabled. Both convolutions are
// bias-free — the batch norm's shift plays that role.
struct STGCNBlockParams {
    STGCNBlockConfig cfg;
    Parameter graph_weight;     // [C_out, C_in]
    Parameter temporal_weight;  // [C_out, kernel]
    BatchNormParams bn;
    std::unique_ptr<Parameter> projection;  // [C_out, C_in], only when the skip needs reshaping

    STGCNBlockParams(const std::string& name, const STGCNBlockConfig& config, std::uint64_t seed)
        : cfg(config),
          graph_weight(name + ".graph_w", fan_in_uniform({config.out_channels, config.in_channels},
                                                         config.in_channels, seed, name + ".graph_w")),
          temporal_weight(name + ".temporal_w",
                          fan_in_uniform({config.out_channels, config.temporal_kernel},
                                         config.temporal_kernel, seed, name + ".temporal_w")),
          bn(name + ".bn", config.out_channels) {
        cfg.validate();
        if (cfg.residual && (cfg.in_channels != cfg.out_channels || cfg.temporal_stride != 1))
            projection = std::make_unique<Parameter>(
                name + ".proj_w", fan_in_uniform({cfg.out_channels, cfg.in_channels},
                                                 cfg.in_channels, seed, name + ".proj_w"));
    }

    Val forward(Tape& t, Val x, const SkeletonGraph& graph, bool training) {
        Val h = spatial_graph_conv(t, x, graph, t.param(graph_weight));
        h = relu(t, h);
        h = temporal_conv(t, h, t.param(temporal_weight), cfg.temporal_stride);
        h = bn.forward(t, h, training);
        if (!cfg.residual) return h;
        Val skip = x;
        if (projection) {
            skip = temporal_subsample(t, skip, cfg.temporal_stride);
            skip = channel_mix(t, skip, t.param(*projection));
        }
        return add(t, h, skip);
    }

    void collect(std::vector<Parameter*>& params) {
        params.push_back(&graph_weight);
        params.push_back(&temporal_weight);
        bn.collect(params);
        if (projection) params.push_back(projection.get());
    }
    void collect_state(StateDict& state) {
        state.push_back({graph_weight.name, &graph_weight.value});
        state.push_back({temporal_weight.name, &temporal_weight.value});
        bn.collect_state(state);
        if (projection) state.push_back({projection->name, &projection->value});
    }
};

}  // namespace skelid
