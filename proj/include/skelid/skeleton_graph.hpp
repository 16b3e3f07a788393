#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "skelid/tensor.hpp"

namespace skelid {

using EdgeList = std::vector<std::pair<std::int64_t, std::int64_t>>;

// Vertex set plus symmetric adjacency, normalized the ST-GCN way:
// D^(-1/2)·(A + I)·D^(-1/2) with D the degree matrix of (A + I). The raw
// edge list never contains self-loops; the +I term supplies them.
struct SkeletonGraph {
    std::int64_t vertex_count = 0;
    EdgeList edges;
    Tensor normalized_adjacency;  // [V, V]
};

inline SkeletonGraph build_skeleton_graph(std::int64_t vertex_count, const EdgeList& edge_table) {
    if (vertex_count < 1) throw ValidationError("skeleton graph needs at least one vertex");
    for (const auto& [i, j] : edge_table) {
        if (i < 0 || i >= vertex_count || j < 0 || j >= vertex_count)
            throw ValidationError("edge (" + std::to_string(i) + ", " + std::to_string(j) +
                                  ") references a vertex outside [0, " + std::to_string(vertex_count) + ")");
        if (i == j)
            throw ValidationError("edge (" + std::to_string(i) + ", " + std::to_string(j) +
                                  ") is a self-loop; self-loops are added during normalization");
    }

    Tensor a({vertex_count, vertex_count});
    for (const auto& [i, j] : edge_table) {
        a.at({i, j}) = 1.0;
        a.at({j, i}) = 1.0;
    }
    for (std::int64_t v = 0; v < vertex_count; ++v) a.at({v, v}) = 1.0;

    std::vector<double> dinv_sqrt(static_cast<std::size_t>(vertex_count));
    for (std::int64_t v = 0; v < vertex_count; ++v) {
        double deg = 0.0;
        for (std::int64_t u = 0; u < vertex_count; ++u) deg += a.at({v, u});
        dinv_sqrt[static_cast<std::size_t>(v)] = 1.0 / std::sqrt(deg);
    }
    Tensor norm({vertex_count, vertex_count});
    for (std::int64_t v = 0; v < vertex_count; ++v)
        for (std::int64_t u = 0; u < vertex_count; ++u)
            norm.at({v, u}) = dinv_sqrt[static_cast<std::size_t>(v)] * a.at({v, u}) * dinv_sqrt[static_cast<std::size_t>(u)];

    return SkeletonGraph{vertex_count, edge_table, std::move(norm)};
}

// A graph with no edges: the normalized adjacency is the identity, so graph
// convolution degenerates to an independent per-vertex map.
inline SkeletonGraph edgeless_graph(std::int64_t vertex_count) { return build_skeleton_graph(vertex_count, {}); }

// ----------------------------- edge table file -----------------------------
// One `i<SPACE>j` pair per line, 0-based vertex indices.

inline std::string serialize_edge_table(const EdgeList& edges) {
    std::string out;
    for (const auto& [i, j] : edges) out += std::to_string(i) + " " + std::to_string(j) + "\n";
    return out;
}

inline EdgeList parse_edge_table(const std::string& text) {
    EdgeList edges;
    std::istringstream in(text);
    std::string line;
    std::int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::int64_t i = -1, j = -1;
        std::string extra;
        if (!(ls >> i >> j) || (ls >> extra) || i < 0 || j < 0)
            throw ParseError("edge table line " + std::to_string(line_no) +
                             ": expected two non-negative vertex indices, got \"" + line + "\"");
        edges.emplace_back(i, j);
    }
    return edges;
}

}  // namespace skelid
