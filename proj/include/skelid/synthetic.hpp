#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skelid/common.hpp"
#include "skelid/json_write.hpp"
#include "skelid/keypoint_data.hpp"
#include "skelid/keypoint_io.hpp"
#include "skelid/presets.hpp"
#include "skelid/rng.hpp"

namespace skelid {

// Which kind of identity signature the generated corpus carries:
//   spatial_only  — identities differ in static pose offsets, share motion;
//   temporal_only — identities differ in motion frequency, share the pose;
//   mixed         — pose offsets encode one factor, frequency another.
enum class CorpusMode { spatial_only, temporal_only, mixed };

inline const char* corpus_mode_name(CorpusMode m) {
    switch (m) {
        case CorpusMode::spatial_only: return "spatial-only";
        case CorpusMode::temporal_only: return "temporal-only";
        case CorpusMode::mixed: return "mixed";
    }
    throw ValidationError("corrupt corpus mode value");
}

inline CorpusMode parse_corpus_mode(const std::string& name) {
    if (name == "spatial-only") return CorpusMode::spatial_only;
    if (name == "temporal-only") return CorpusMode::temporal_only;
    if (name == "mixed") return CorpusMode::mixed;
    throw ValidationError("unknown corpus mode \"" + name +
                          "\" (expected spatial-only, temporal-only, or mixed)");
}

struct MotionTarget {
    std::int64_t vertex = 0;
    std::array<double, 2> direction{0.0, 0.0};  // unit vector scaled by the mode amplitude
};

struct MotionMode {
    std::string group;  // descriptive name: "arms", "head", "legs"
    std::vector<MotionTarget> targets;
    double amplitude = 0.0;
    double frequency = 0.0;  // cycles per frame
    double phase = 0.0;      // radians
};

struct IdentityProfile {
    std::int64_t identity_index = 0;
    std::vector<std::array<double, 2>> base_offsets;  // V x 2 displacement from the canonical pose
    std::vector<MotionMode> motion_modes;
    double noise_sigma = 0.0;

    void validate() const {
        if (noise_sigma < 0.0) throw ValidationError("noise_sigma must be non-negative");
        for (const auto& m : motion_modes) {
            if (!(m.frequency > 0.0 && m.frequency < 0.5))
                throw ValidationError("motion frequency must lie in (0, 0.5) cycles/frame, got " +
                                      format_double(m.frequency));
            if (m.amplitude < 0.0) throw ValidationError("motion amplitude must be non-negative");
        }
    }
};

struct CorpusSpec {
    std::int64_t identity_count = 8;
    std::int64_t clips_per_identity = 50;
    std::int64_t frames_per_clip = 60;
    std::int64_t vertex_count = 17;
    std::uint64_t seed = 1;
    CorpusMode mode = CorpusMode::mixed;
    double noise_sigma = 0.02;
    std::string preset = "body17";

    void validate() const {
        if (identity_count < 2)
            throw ValidationError("identity_count must be at least 2, got " +
                                  std::to_string(identity_count));
        if (clips_per_identity < 2)
            throw ValidationError("clips_per_identity must be at least 2, got " +
                                  std::to_string(clips_per_identity));
        if (frames_per_clip < 1) throw ValidationError("frames_per_clip must be positive");
        if (noise_sigma < 0.0) throw ValidationError("noise_sigma must be non-negative");
        const SkeletonPreset& p = skeleton_preset(preset);
        if (p.vertex_count != vertex_count)
            throw ValidationError("preset \"" + preset + "\" has " + std::to_string(p.vertex_count) +
                                  " vertices but vertex_count is " + std::to_string(vertex_count));
        if (vertex_count < 17)
            throw ValidationError("synthetic motion groups need the 17 body vertices; preset \"" +
                                  preset + "\" has only " + std::to_string(vertex_count));
        if (mode == CorpusMode::temporal_only && identity_count > 8)
            throw ValidationError(
                "temporal-only mode supports at most 8 identities (8 distinct cycle counts share "
                "a 60-frame period), got " + std::to_string(identity_count));
        if (mode == CorpusMode::mixed && identity_count > 32)
            throw ValidationError("mixed mode supports at most 32 identities (4 pose slots x 8 "
                                  "cycle counts), got " + std::to_string(identity_count));
    }
};

namespace detail {

// Reference temporal grid: all frequencies are integer cycle counts over a
// 60-frame window. Every count is coprime with 60, so over a 60-frame clip
// each sinusoid (a) completes whole cycles — its time average is exactly
// zero — and (b) visits the same multiset of phase angles {2*pi*k/60}
// regardless of which count it is. (a) keeps mean poses identity-independent
// outside the static offsets; (b) makes per-frame pose configurations
// carry no frequency information when frames are viewed as an unordered set.
inline constexpr double kCycleFrames = 60.0;
inline constexpr std::array<int, 8> kCycleCounts{7, 19, 11, 23, 13, 29, 17, 1};

// Vertices carrying static identity offsets: ears (3, 4) and hips (11, 12).
// None of them participates in a motion group, so a static-offset signature
// never mixes with the sinusoidal signal.
inline constexpr std::array<std::int64_t, 4> kSignatureVertices{3, 4, 11, 12};

// Mixed-mode slot displacements. Each identity's four signature vertices are
// placed on the SAME four absolute positions (canonical vertex + delta),
// rotated cyclically by identity % 4 — so the unordered set of per-vertex
// trajectories is identical within an identity_index/4 group and only the
// assignment of trajectory to vertex differs.
inline constexpr double kMixedDelta[4][2] = {
    {0.30, 0.12}, {-0.30, 0.12}, {0.22, -0.30}, {-0.22, -0.30}};

inline constexpr double kSpatialOffsetRadius = 0.3;
inline constexpr double kPi = 3.14159265358979323846;

inline std::vector<MotionMode> standard_motion_modes(double frequency) {
    std::vector<MotionMode> modes(3);
    modes[0].group = "arms";
    modes[0].targets = {{7, {0.6, -0.8}}, {8, {-0.6, -0.8}}, {9, {0.8, -0.6}}, {10, {-0.8, -0.6}}};
    modes[0].amplitude = 0.15;
    modes[0].frequency = frequency;
    modes[0].phase = 0.0;
    modes[1].group = "head";
    modes[1].targets = {{0, {0.0, 1.0}}, {1, {0.0, 1.0}}, {2, {0.0, 1.0}}};
    modes[1].amplitude = 0.08;
    modes[1].frequency = frequency;
    modes[1].phase = kPi / 2.0;
    modes[2].group = "legs";
    modes[2].targets = {{13, {1.0, 0.0}}, {14, {-1.0, 0.0}}};
    modes[2].amplitude = 0.10;
    modes[2].frequency = frequency;
    modes[2].phase = kPi;
    return modes;
}

}  // namespace detail

inline IdentityProfile generate_identity(const CorpusSpec& spec, std::int64_t identity_index) {
    spec.validate();
    if (identity_index < 0 || identity_index >= spec.identity_count)
        throw ValidationError("identity_index " + std::to_string(identity_index) +
                              " out of range [0, " + std::to_string(spec.identity_count) + ")");
    const SkeletonPreset& preset = skeleton_preset(spec.preset);

    IdentityProfile p;
    p.identity_index = identity_index;
    p.noise_sigma = spec.noise_sigma;
    p.base_offsets.assign(static_cast<std::size_t>(spec.vertex_count), {0.0, 0.0});

    using namespace detail;
    switch (spec.mode) {
        case CorpusMode::spatial_only: {
            // Distinct static offsets, shared motion. The four signature
            // offsets are a rotated orthogonal cross, so they sum to zero
            // (no centroid shift) and any two identities' offset patterns
            // are 2*R*sin(pi/K) apart per vertex.
            const double angle = 2.0 * kPi * static_cast<double>(identity_index) /
                                 static_cast<double>(spec.identity_count);
            for (std::size_t j = 0; j < kSignatureVertices.size(); ++j) {
                const double a = angle + static_cast<double>(j) * kPi / 2.0;
                auto& off = p.base_offsets[static_cast<std::size_t>(kSignatureVertices[j])];
                off[0] = kSpatialOffsetRadius * std::cos(a);
                off[1] = kSpatialOffsetRadius * std::sin(a);
            }
            p.motion_modes = standard_motion_modes(kCycleCounts[0] / kCycleFrames);
            break;
        }
        case CorpusMode::temporal_only: {
            // Shared (zero) offsets, distinct motion frequency.
            p.motion_modes = standard_motion_modes(
                kCycleCounts[static_cast<std::size_t>(identity_index)] / kCycleFrames);
            break;
        }
        case CorpusMode::mixed: {
            // Pose factor: identity % 4 cyclically assigns the signature
            // vertices to a fixed set of absolute positions. Motion factor:
            // identity / 4 picks the cycle count.
            const std::size_t s = static_cast<std::size_t>(identity_index % 4);
            std::array<std::array<double, 2>, 4> q{};
            for (std::size_t j = 0; j < 4; ++j) {
                const auto& b = preset.canonical_pose[static_cast<std::size_t>(kSignatureVertices[j])];
                q[j] = {b[0] + kMixedDelta[j][0], b[1] + kMixedDelta[j][1]};
            }
            for (std::size_t j = 0; j < 4; ++j) {
                const auto& b = preset.canonical_pose[static_cast<std::size_t>(kSignatureVertices[j])];
                const auto& target = q[(j + s) % 4];
                p.base_offsets[static_cast<std::size_t>(kSignatureVertices[j])] = {target[0] - b[0],
                                                                                  target[1] - b[1]};
            }
            p.motion_modes = standard_motion_modes(
                kCycleCounts[static_cast<std::size_t>(identity_index / 4)] / kCycleFrames);
            break;
        }
    }
    p.validate();
    return p;
}

inline std::uint64_t clip_seed_for(std::uint64_t corpus_seed, std::int64_t identity,
                                   std::int64_t clip_index) {
    return derive_key({corpus_seed, fnv1a64("clip"), static_cast<std::uint64_t>(identity),
                       static_cast<std::uint64_t>(clip_index)});
}

// Renders one clip. Frame t, vertex v:
//   position = canonical[v] + base_offsets[v]
//            + sum over modes containing v of amplitude * direction
//              * sin(2*pi*frequency*t + phase + clip_jitter)
//            + noise_sigma * N(0, 1)  (per coordinate)
// with confidence 1 everywhere. clip_jitter, one U[0, 2*pi) draw shared by
// all modes of the clip, is the first output of the clip's random stream;
// the noise stream continues from the same generator.
inline KeypointSequence render_sequence(const IdentityProfile& profile, const SkeletonPreset& preset,
                                        std::int64_t frames, std::uint64_t clip_seed) {
    profile.validate();
    const auto V = static_cast<std::int64_t>(profile.base_offsets.size());
    if (preset.vertex_count != V)
        throw ValidationError("profile has " + std::to_string(V) + " vertices but preset \"" +
                              preset.name + "\" has " + std::to_string(preset.vertex_count));
    if (frames < 1) throw ValidationError("frames must be positive");

    CounterRng rng(clip_seed);
    const double jitter = rng.next_uniform(0.0, 2.0 * detail::kPi);

    KeypointSequence seq(frames, V);
    for (std::int64_t t = 0; t < frames; ++t)
        for (std::int64_t v = 0; v < V; ++v) {
            const auto& base = preset.canonical_pose[static_cast<std::size_t>(v)];
            const auto& off = profile.base_offsets[static_cast<std::size_t>(v)];
            double x = base[0] + off[0];
            double y = base[1] + off[1];
            for (const auto& m : profile.motion_modes)
                for (const auto& target : m.targets)
                    if (target.vertex == v) {
                        const double s = m.amplitude *
                                         std::sin(2.0 * detail::kPi * m.frequency *
                                                      static_cast<double>(t) +
                                                  m.phase + jitter);
                        x += s * target.direction[0];
                        y += s * target.direction[1];
                    }
            if (profile.noise_sigma > 0.0) {
                x += profile.noise_sigma * rng.next_normal();
                y += profile.noise_sigma * rng.next_normal();
            }
            seq.at(0, t, v) = x;
            seq.at(1, t, v) = y;
            seq.at(2, t, v) = 1.0;
        }
    return seq;
}

inline std::string identity_label_for(std::int64_t identity) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "id_%03lld", static_cast<long long>(identity));
    return buf;
}

inline std::string clip_id_for(std::int64_t identity, std::int64_t clip_index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "id_%03lld_clip_%03lld", static_cast<long long>(identity),
                  static_cast<long long>(clip_index));
    return buf;
}

struct CorpusBundle {
    std::vector<LabeledSequence> clips;  // identity-major, clip-index order
    LabelMap labels;
    SplitManifest split;
};

inline CorpusBundle generate_corpus(const CorpusSpec& spec) {
    spec.validate();
    const SkeletonPreset& preset = skeleton_preset(spec.preset);
    CorpusBundle out;
    std::vector<std::pair<std::string, std::int64_t>> split_input;
    for (std::int64_t i = 0; i < spec.identity_count; ++i) {
        out.labels.add(identity_label_for(i));
        const IdentityProfile profile = generate_identity(spec, i);
        for (std::int64_t c = 0; c < spec.clips_per_identity; ++c) {
            LabeledSequence item;
            item.sequence = render_sequence(profile, preset, spec.frames_per_clip,
                                            clip_seed_for(spec.seed, i, c));
            item.identity = i;
            item.clip_id = clip_id_for(i, c);
            split_input.emplace_back(item.clip_id, i);
            out.clips.push_back(std::move(item));
        }
    }
    out.split = split_dataset(split_input, 0.8, spec.seed);
    return out;
}

// corpus.meta provenance file: the full generation spec plus the frame_skip
// the training side should use (1 — synthetic clips are already on the
// decimated grid, so skipping again would halve the cycle counts).
inline std::string corpus_meta_json(const CorpusSpec& spec) {
    std::string out = "{\n";
    out += "  \"identity_count\": " + jsonw::num(spec.identity_count) + ",\n";
    out += "  \"clips_per_identity\": " + jsonw::num(spec.clips_per_identity) + ",\n";
    out += "  \"frames_per_clip\": " + jsonw::num(spec.frames_per_clip) + ",\n";
    out += "  \"vertex_count\": " + jsonw::num(spec.vertex_count) + ",\n";
    out += "  \"seed\": " + jsonw::num(spec.seed) + ",\n";
    out += "  \"mode\": " + jsonw::str(corpus_mode_name(spec.mode)) + ",\n";
    out += "  \"noise_sigma\": " + jsonw::num(spec.noise_sigma) + ",\n";
    out += "  \"preset\": " + jsonw::str(spec.preset) + ",\n";
    out += "  \"frame_skip\": 1\n";
    out += "}\n";
    return out;
}

struct CorpusMeta {
    CorpusSpec spec;
    std::int64_t frame_skip = 1;
};

inline CorpusMeta parse_corpus_meta(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("corpus meta: ") + e.what());
    }
    if (!doc.is_object()) throw SchemaError("corpus meta must be a JSON object");
    CorpusMeta meta;
    auto need = [&doc](const char* key) -> const nlohmann::json& {
        auto it = doc.find(key);
        if (it == doc.end())
            throw SchemaError(std::string("corpus meta missing field \"") + key + "\"");
        return *it;
    };
    auto as_int = [](const nlohmann::json& j, const char* key) {
        if (!j.is_number_integer())
            throw SchemaError(std::string("corpus meta field \"") + key + "\" must be an integer");
        return j.get<std::int64_t>();
    };
    meta.spec.identity_count = as_int(need("identity_count"), "identity_count");
    meta.spec.clips_per_identity = as_int(need("clips_per_identity"), "clips_per_identity");
    meta.spec.frames_per_clip = as_int(need("frames_per_clip"), "frames_per_clip");
    meta.spec.vertex_count = as_int(need("vertex_count"), "vertex_count");
    meta.spec.seed = static_cast<std::uint64_t>(as_int(need("seed"), "seed"));
    if (!need("mode").is_string()) throw SchemaError("corpus meta field \"mode\" must be a string");
    meta.spec.mode = parse_corpus_mode(need("mode").get<std::string>());
    if (!need("noise_sigma").is_number())
        throw SchemaError("corpus meta field \"noise_sigma\" must be a number");
    meta.spec.noise_sigma = need("noise_sigma").get<double>();
    if (!need("preset").is_string()) throw SchemaError("corpus meta field \"preset\" must be a string");
    meta.spec.preset = need("preset").get<std::string>();
    meta.frame_skip = as_int(need("frame_skip"), "frame_skip");
    if (meta.frame_skip < 1) throw SchemaError("corpus meta frame_skip must be positive");
    meta.spec.validate();
    return meta;
}

}  // namespace skelid
