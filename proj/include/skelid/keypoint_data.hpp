#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "skelid/common.hpp"
#include "skelid/rng.hpp"
#include "skelid/tensor.hpp"

namespace skelid {

// A single clip of 2D keypoints with confidences, stored channel-major as
// [C=3, T, V, M=1] where channel 0 is x, 1 is y, 2 is confidence.
struct KeypointSequence {
    static constexpr std::int64_t kChannels = 3;
    static constexpr std::int64_t kPersons = 1;

    Tensor data;  // [3, T, V, 1]

    KeypointSequence() : data(Shape{3, 0, 0, 1}) {}
    KeypointSequence(std::int64_t t, std::int64_t v) : data(Shape{kChannels, t, v, kPersons}) {
        if (t < 0 || v <= 0)
            throw ValidationError("keypoint sequence needs t >= 0 and v > 0, got t=" +
                                  std::to_string(t) + " v=" + std::to_string(v));
    }

    std::int64_t frames() const { return data.dim(1); }
    std::int64_t vertices() const { return data.dim(2); }

    double& at(std::int64_t c, std::int64_t t, std::int64_t v) { return data.at({c, t, v, 0}); }
    double at(std::int64_t c, std::int64_t t, std::int64_t v) const { return data.at({c, t, v, 0}); }

    void validate() const {
        for (std::int64_t t = 0; t < frames(); ++t)
            for (std::int64_t v = 0; v < vertices(); ++v) {
                for (std::int64_t c = 0; c < kChannels; ++c)
                    if (!std::isfinite(at(c, t, v)))
                        throw ValidationError("non-finite keypoint value at frame " + std::to_string(t) +
                                              " vertex " + std::to_string(v));
                const double conf = at(2, t, v);
                if (conf < 0.0 || conf > 1.0)
                    throw ValidationError("confidence out of [0,1] at frame " + std::to_string(t) +
                                          " vertex " + std::to_string(v) + ": " + format_double(conf));
            }
    }
};

struct LabeledSequence {
    KeypointSequence sequence;
    std::int64_t identity = 0;
    std::string clip_id;
};

struct NormalizeResult {
    KeypointSequence sequence;
    std::vector<std::int64_t> untouched_frames;  // frames with no positive-confidence vertex
};

// Per-frame translation removal followed by per-sequence scale removal:
//  1. each frame is shifted so the centroid of its positive-confidence
//     vertices sits at the origin (frames with no such vertex are left
//     untouched and reported);
//  2. the whole sequence is divided by the root-mean-square radius of the
//     positive-confidence vertices of the shifted frames.
// Confidences pass through unchanged.
inline NormalizeResult normalize_sequence(const KeypointSequence& in) {
    NormalizeResult out;
    out.sequence = in;
    KeypointSequence& seq = out.sequence;
    const std::int64_t T = seq.frames(), V = seq.vertices();

    for (std::int64_t t = 0; t < T; ++t) {
        double cx = 0.0, cy = 0.0;
        std::int64_t n = 0;
        for (std::int64_t v = 0; v < V; ++v)
            if (seq.at(2, t, v) > 0.0) {
                cx += seq.at(0, t, v);
                cy += seq.at(1, t, v);
                ++n;
            }
        if (n == 0) {
            out.untouched_frames.push_back(t);
            continue;
        }
        cx /= static_cast<double>(n);
        cy /= static_cast<double>(n);
        for (std::int64_t v = 0; v < V; ++v) {
            seq.at(0, t, v) -= cx;
            seq.at(1, t, v) -= cy;
        }
    }

    double sq = 0.0;
    std::int64_t n = 0;
    std::size_t skip = 0;
    for (std::int64_t t = 0; t < T; ++t) {
        if (skip < out.untouched_frames.size() && out.untouched_frames[skip] == t) {
            ++skip;
            continue;
        }
        for (std::int64_t v = 0; v < V; ++v)
            if (seq.at(2, t, v) > 0.0) {
                sq += seq.at(0, t, v) * seq.at(0, t, v) + seq.at(1, t, v) * seq.at(1, t, v);
                ++n;
            }
    }
    if (n > 0) {
        const double rms = std::sqrt(sq / static_cast<double>(n));
        if (rms >= 1e-12) {
            skip = 0;
            for (std::int64_t t = 0; t < T; ++t) {
                if (skip < out.untouched_frames.size() && out.untouched_frames[skip] == t) {
                    ++skip;
                    continue;
                }
                for (std::int64_t v = 0; v < V; ++v) {
                    seq.at(0, t, v) /= rms;
                    seq.at(1, t, v) /= rms;
                }
            }
        }
    }
    return out;
}

// Fixed-length temporal standardization: keep every frame_skip-th frame
// starting at 0, then center-crop to target_frames (crop start is the excess
// halved, rounding down, so an odd excess drops one more frame at the end),
// then pad by repeating the last frame.
inline KeypointSequence resample_to_length(const KeypointSequence& in, std::int64_t target_frames = 60,
                                           std::int64_t frame_skip = 2) {
    if (target_frames <= 0)
        throw ValidationError("target_frames must be positive, got " + std::to_string(target_frames));
    if (frame_skip <= 0)
        throw ValidationError("frame_skip must be positive, got " + std::to_string(frame_skip));
    if (in.frames() == 0) throw ValidationError("cannot resample an empty sequence");

    std::vector<std::int64_t> kept;
    for (std::int64_t t = 0; t < in.frames(); t += frame_skip) kept.push_back(t);

    if (static_cast<std::int64_t>(kept.size()) > target_frames) {
        const std::int64_t start = (static_cast<std::int64_t>(kept.size()) - target_frames) / 2;
        kept = std::vector<std::int64_t>(kept.begin() + start, kept.begin() + start + target_frames);
    }
    while (static_cast<std::int64_t>(kept.size()) < target_frames) kept.push_back(kept.back());

    KeypointSequence out(target_frames, in.vertices());
    for (std::int64_t t = 0; t < target_frames; ++t)
        for (std::int64_t v = 0; v < in.vertices(); ++v)
            for (std::int64_t c = 0; c < KeypointSequence::kChannels; ++c)
                out.at(c, t, v) = in.at(c, kept[t], v);
    return out;
}

struct SplitManifest {
    std::vector<std::string> train;
    std::vector<std::string> test;
    double train_ratio = 0.8;
};

// Identity-stratified clip split. Every identity contributes at least one
// clip to each side; identities with fewer than two clips are rejected.
// Deterministic for a given (seed, ratio, clip set) regardless of input
// order: clips are grouped by identity, sorted by id, shuffled with a
// per-identity stream, and the output lists are sorted.
inline SplitManifest split_dataset(const std::vector<std::pair<std::string, std::int64_t>>& clips,
                                   double train_ratio, std::uint64_t seed) {
    if (!(train_ratio > 0.0 && train_ratio < 1.0))
        throw ValidationError("train_ratio must lie strictly between 0 and 1, got " +
                              format_double(train_ratio));
    if (clips.empty()) throw ValidationError("cannot split an empty clip set");

    std::map<std::int64_t, std::vector<std::string>> by_identity;
    for (const auto& [clip_id, identity] : clips) by_identity[identity].push_back(clip_id);

    SplitManifest out;
    out.train_ratio = train_ratio;
    for (auto& [identity, ids] : by_identity) {
        if (ids.size() < 2)
            throw ValidationError("identity " + std::to_string(identity) +
                                  " has fewer than 2 clips; cannot place it on both sides of the split");
        std::sort(ids.begin(), ids.end());
        CounterRng rng = CounterRng::from(seed, "split", static_cast<std::uint64_t>(identity));
        rng.shuffle(ids);
        const auto n = static_cast<std::int64_t>(ids.size());
        std::int64_t n_train = std::llround(train_ratio * static_cast<double>(n));
        n_train = std::clamp<std::int64_t>(n_train, 1, n - 1);
        for (std::int64_t i = 0; i < n; ++i)
            (i < n_train ? out.train : out.test).push_back(ids[i]);
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

}  // namespace skelid
