#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "skelid/skeleton_graph.hpp"

namespace skelid {

// Named skeleton layout: vertex count, edge table, and a canonical standing
// pose used by the synthetic generator. Poses are centered on their centroid
// and scaled to unit root-mean-square radius at construction time.
struct SkeletonPreset {
    std::string name;
    std::int64_t vertex_count = 0;
    EdgeList edges;
    std::vector<std::array<double, 2>> canonical_pose;

    SkeletonGraph graph() const { return build_skeleton_graph(vertex_count, edges); }
};

namespace detail {

inline void center_and_scale(std::vector<std::array<double, 2>>& pose) {
    double cx = 0.0, cy = 0.0;
    for (const auto& p : pose) {
        cx += p[0];
        cy += p[1];
    }
    cx /= static_cast<double>(pose.size());
    cy /= static_cast<double>(pose.size());
    double rms = 0.0;
    for (auto& p : pose) {
        p[0] -= cx;
        p[1] -= cy;
        rms += p[0] * p[0] + p[1] * p[1];
    }
    rms = std::sqrt(rms / static_cast<double>(pose.size()));
    for (auto& p : pose) {
        p[0] /= rms;
        p[1] /= rms;
    }
}

// 17-vertex body convention: 0 nose, 1/2 left/right eye, 3/4 ears,
// 5/6 shoulders, 7/8 elbows, 9/10 wrists, 11/12 hips, 13/14 knees,
// 15/16 ankles.
inline SkeletonPreset make_body17() {
    SkeletonPreset p;
    p.name = "body17";
    p.vertex_count = 17;
    p.edges = {
        {15, 13}, {13, 11}, {16, 14}, {14, 12}, {11, 12}, {5, 11}, {6, 12}, {5, 6}, {5, 7}, {6, 8},
        {7, 9},   {8, 10},  {1, 2},   {0, 1},   {0, 2},   {1, 3},  {2, 4},  {3, 5}, {4, 6},
    };
    p.canonical_pose = {
        {0.00, 0.95},    // nose
        {0.06, 1.02},    // left eye
        {-0.06, 1.02},   // right eye
        {0.14, 0.98},    // left ear
        {-0.14, 0.98},   // right ear
        {0.35, 0.60},    // left shoulder
        {-0.35, 0.60},   // right shoulder
        {0.55, 0.25},    // left elbow
        {-0.55, 0.25},   // right elbow
        {0.65, -0.05},   // left wrist
        {-0.65, -0.05},  // right wrist
        {0.22, -0.20},   // left hip
        {-0.22, -0.20},  // right hip
        {0.25, -0.75},   // left knee
        {-0.25, -0.75},  // right knee
        {0.27, -1.30},   // left ankle
        {-0.27, -1.30},  // right ankle
    };
    center_and_scale(p.canonical_pose);
    return p;
}

// 133-vertex whole-body convention: body 0-16 as above, feet 17-22, face
// 23-90 (jawline, brows, nose, eyes, lips), hands 91-111 and 112-132 (wrist
// plus four joints per finger).
inline SkeletonPreset make_wholebody133() {
    SkeletonPreset body = make_body17();
    SkeletonPreset p;
    p.name = "wholebody133";
    p.vertex_count = 133;
    p.edges = body.edges;

    // Feet: 17-19 left (big toe, small toe, heel), 20-22 right, hung off the ankles.
    for (std::int64_t v : {17, 18, 19}) p.edges.push_back({15, v});
    for (std::int64_t v : {20, 21, 22}) p.edges.push_back({16, v});

    // Face chains. Open polylines for jaw/brows/nose, closed rings for eyes and lips.
    auto chain = [&p](std::int64_t first, std::int64_t last, bool closed) {
        for (std::int64_t v = first; v < last; ++v) p.edges.push_back({v, v + 1});
        if (closed) p.edges.push_back({last, first});
    };
    chain(23, 39, false);  // jawline, 17 points
    chain(40, 44, false);  // right brow
    chain(45, 49, false);  // left brow
    chain(50, 53, false);  // nose bridge
    chain(54, 58, false);  // nose bottom
    chain(59, 64, true);   // right eye ring
    chain(65, 70, true);   // left eye ring
    chain(71, 82, true);   // outer lips ring
    chain(83, 90, true);   // inner lips ring

    // Hands: wrist root then four joints per finger. 91 left root, 112 right root.
    auto hand = [&p](std::int64_t root) {
        for (int f = 0; f < 5; ++f) {
            std::int64_t base = root + 1 + 4 * f;
            p.edges.push_back({root, base});
            for (int s = 0; s < 3; ++s) p.edges.push_back({base + s, base + s + 1});
        }
    };
    hand(91);
    hand(112);
    p.edges.push_back({9, 91});    // left wrist to left hand root
    p.edges.push_back({10, 112});  // right wrist to right hand root

    // Canonical pose: body as in body17 (pre-normalization coordinates),
    // feet under the ankles, face on an ellipse around the head, hands fanned
    // below the wrists.
    std::vector<std::array<double, 2>> pose = {
        {0.00, 0.95},  {0.06, 1.02},  {-0.06, 1.02}, {0.14, 0.98},  {-0.14, 0.98}, {0.35, 0.60},
        {-0.35, 0.60}, {0.55, 0.25},  {-0.55, 0.25}, {0.65, -0.05}, {-0.65, -0.05}, {0.22, -0.20},
        {-0.22, -0.20}, {0.25, -0.75}, {-0.25, -0.75}, {0.27, -1.30}, {-0.27, -1.30},
    };
    pose.push_back({0.33, -1.36});   // 17 left big toe
    pose.push_back({0.37, -1.34});   // 18 left small toe
    pose.push_back({0.24, -1.36});   // 19 left heel
    pose.push_back({-0.33, -1.36});  // 20 right big toe
    pose.push_back({-0.37, -1.34});  // 21 right small toe
    pose.push_back({-0.24, -1.36});  // 22 right heel

    const double face_cx = 0.0, face_cy = 0.98;
    auto face_point = [&](double angle_deg, double rx, double ry) {
        const double a = angle_deg * 3.14159265358979323846 / 180.0;
        pose.push_back({face_cx + rx * std::cos(a), face_cy + ry * std::sin(a)});
    };
    // 23-39 jawline: lower half arc, left ear to right ear.
    for (int i = 0; i < 17; ++i) face_point(180.0 + 180.0 * i / 16.0, 0.13, 0.15);
    // 40-44 right brow, 45-49 left brow.
    for (int i = 0; i < 5; ++i) pose.push_back({-0.09 + 0.02 * i, 1.065});
    for (int i = 0; i < 5; ++i) pose.push_back({0.01 + 0.02 * i, 1.065});
    // 50-53 nose bridge, 54-58 nose bottom.
    for (int i = 0; i < 4; ++i) pose.push_back({0.0, 1.04 - 0.025 * i});
    for (int i = 0; i < 5; ++i) pose.push_back({-0.02 + 0.01 * i, 0.955});
    // 59-64 right eye ring, 65-70 left eye ring.
    for (int i = 0; i < 6; ++i) face_point(60.0 * i, 0.022, 0.012);
    for (std::size_t i = pose.size() - 6; i < pose.size(); ++i) pose[i][0] -= 0.055;
    for (int i = 0; i < 6; ++i) face_point(60.0 * i, 0.022, 0.012);
    for (std::size_t i = pose.size() - 6; i < pose.size(); ++i) pose[i][0] += 0.055;
    // 71-82 outer lips, 83-90 inner lips.
    for (int i = 0; i < 12; ++i) face_point(30.0 * i, 0.035, 0.018);
    for (std::size_t i = pose.size() - 12; i < pose.size(); ++i) pose[i][1] -= 0.09;
    for (int i = 0; i < 8; ++i) face_point(45.0 * i, 0.02, 0.009);
    for (std::size_t i = pose.size() - 8; i < pose.size(); ++i) pose[i][1] -= 0.09;

    // Hands: root at the wrist, fingers fanned downward.
    auto hand_pose = [&pose](double wx, double wy, double side) {
        pose.push_back({wx, wy});
        for (int f = 0; f < 5; ++f) {
            const double spread = (f - 2) * 0.035;
            for (int s = 1; s <= 4; ++s)
                pose.push_back({wx + side * 0.02 + spread, wy - 0.035 * s});
        }
    };
    hand_pose(0.65, -0.08, 1.0);
    hand_pose(-0.65, -0.08, -1.0);

    p.canonical_pose = std::move(pose);
    center_and_scale(p.canonical_pose);
    return p;
}

}  // namespace detail

inline const std::vector<std::string>& skeleton_preset_names() {
    static const std::vector<std::string> names{"body17", "wholebody133"};
    return names;
}

inline const SkeletonPreset& skeleton_preset(const std::string& name) {
    static const SkeletonPreset body17 = detail::make_body17();
    static const SkeletonPreset wholebody = detail::make_wholebody133();
    if (name == "body17") return body17;
    if (name == "wholebody133") return wholebody;
    throw ValidationError("unknown skeleton preset \"" + name + "\" (available: body17, wholebody133)");
}

inline const SkeletonPreset& skeleton_preset_for_vertex_count(std::int64_t v) {
    for (const auto& name : skeleton_preset_names()) {
        const SkeletonPreset& p = skeleton_preset(name);
        if (p.vertex_count == v) return p;
    }
    throw ValidationError("no skeleton preset with " + std::to_string(v) + " vertices");
}

}  // namespace skelid
