#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "skelid/synthetic.hpp"

using namespace skelid;

namespace {

constexpr double kTau = 2.0 * 3.14159265358979323846;

bool tensors_bit_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    return std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.numel())) == 0;
}

bool profiles_equal(const IdentityProfile& a, const IdentityProfile& b) {
    if (a.identity_index != b.identity_index || a.noise_sigma != b.noise_sigma) return false;
    if (a.base_offsets != b.base_offsets) return false;
    if (a.motion_modes.size() != b.motion_modes.size()) return false;
    for (std::size_t i = 0; i < a.motion_modes.size(); ++i) {
        const MotionMode& m = a.motion_modes[i];
        const MotionMode& n = b.motion_modes[i];
        if (m.group != n.group || m.amplitude != n.amplitude || m.frequency != n.frequency ||
            m.phase != n.phase)
            return false;
        if (m.targets.size() != n.targets.size()) return false;
        for (std::size_t j = 0; j < m.targets.size(); ++j)
            if (m.targets[j].vertex != n.targets[j].vertex ||
                m.targets[j].direction != n.targets[j].direction)
                return false;
    }
    return true;
}

bool motion_modes_equal(const IdentityProfile& a, const IdentityProfile& b) {
    IdentityProfile a2 = a, b2 = b;
    a2.identity_index = b2.identity_index = 0;
    a2.base_offsets = b2.base_offsets;
    return profiles_equal(a2, b2);
}

CorpusSpec small_spec(CorpusMode mode, std::uint64_t seed, std::int64_t clips, double noise) {
    CorpusSpec spec;
    spec.identity_count = 8;
    spec.clips_per_identity = clips;
    spec.frames_per_clip = 60;
    spec.vertex_count = 17;
    spec.seed = seed;
    spec.mode = mode;
    spec.noise_sigma = noise;
    spec.preset = "body17";
    return spec;
}

std::vector<double> mean_pose(const KeypointSequence& seq) {
    std::vector<double> out(static_cast<std::size_t>(2 * seq.vertices()), 0.0);
    for (std::int64_t t = 0; t < seq.frames(); ++t)
        for (std::int64_t v = 0; v < seq.vertices(); ++v) {
            out[static_cast<std::size_t>(2 * v)] += seq.at(0, t, v);
            out[static_cast<std::size_t>(2 * v + 1)] += seq.at(1, t, v);
        }
    for (double& x : out) x /= static_cast<double>(seq.frames());
    return out;
}

// Nearest-centroid classification on time-averaged poses: train centroids
// from the train split, classify the test split, return accuracy.
double mean_pose_nearest_centroid_accuracy(const CorpusBundle& corpus) {
    std::map<std::string, const LabeledSequence*> by_id;
    for (const auto& clip : corpus.clips) by_id[clip.clip_id] = &clip;
    const auto k = static_cast<std::size_t>(corpus.labels.size());

    std::vector<std::vector<double>> centroid(k);
    std::vector<double> count(k, 0.0);
    for (const auto& id : corpus.split.train) {
        const LabeledSequence* clip = by_id.at(id);
        std::vector<double> mp = mean_pose(clip->sequence);
        auto& c = centroid[static_cast<std::size_t>(clip->identity)];
        if (c.empty()) c.assign(mp.size(), 0.0);
        for (std::size_t i = 0; i < mp.size(); ++i) c[i] += mp[i];
        count[static_cast<std::size_t>(clip->identity)] += 1.0;
    }
    for (std::size_t i = 0; i < k; ++i)
        for (double& x : centroid[i]) x /= count[i];

    std::int64_t correct = 0;
    for (const auto& id : corpus.split.test) {
        const LabeledSequence* clip = by_id.at(id);
        std::vector<double> mp = mean_pose(clip->sequence);
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < k; ++i) {
            double d = 0.0;
            for (std::size_t j = 0; j < mp.size(); ++j)
                d += (mp[j] - centroid[i][j]) * (mp[j] - centroid[i][j]);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        if (static_cast<std::int64_t>(best) == clip->identity) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(corpus.split.test.size());
}

}  // namespace

TEST_CASE("corpus mode names round-trip") {
    for (CorpusMode m : {CorpusMode::spatial_only, CorpusMode::temporal_only, CorpusMode::mixed})
        CHECK(parse_corpus_mode(corpus_mode_name(m)) == m);
    CHECK_THROWS_AS(parse_corpus_mode("bogus"), ValidationError);
}

TEST_CASE("temporal-only identities share the pose and differ in motion") {
    CorpusSpec spec = small_spec(CorpusMode::temporal_only, 3, 4, 0.02);
    IdentityProfile a = generate_identity(spec, 0);
    IdentityProfile b = generate_identity(spec, 5);
    CHECK(a.base_offsets == b.base_offsets);  // element-wise equal (all zero)
    CHECK_FALSE(motion_modes_equal(a, b));
    CHECK(a.motion_modes[0].frequency != b.motion_modes[0].frequency);
    // All modes within one identity share a single frequency.
    for (const auto& m : a.motion_modes) CHECK(m.frequency == a.motion_modes[0].frequency);
}

TEST_CASE("spatial-only identities share the motion and differ in pose") {
    CorpusSpec spec = small_spec(CorpusMode::spatial_only, 3, 4, 0.02);
    IdentityProfile a = generate_identity(spec, 1);
    IdentityProfile b = generate_identity(spec, 6);
    CHECK(motion_modes_equal(a, b));
    CHECK(a.base_offsets != b.base_offsets);
    // The four offset vectors of one identity sum to zero: no centroid shift.
    double sx = 0.0, sy = 0.0;
    for (const auto& off : a.base_offsets) {
        sx += off[0];
        sy += off[1];
    }
    CHECK(std::abs(sx) < 1e-12);
    CHECK(std::abs(sy) < 1e-12);
}

TEST_CASE("profile generation is deterministic") {
    CorpusSpec spec = small_spec(CorpusMode::mixed, 17, 4, 0.02);
    CHECK(profiles_equal(generate_identity(spec, 3), generate_identity(spec, 3)));
}

TEST_CASE("mixed mode factorizes pose and motion") {
    CorpusSpec spec = small_spec(CorpusMode::mixed, 3, 4, 0.02);
    IdentityProfile id0 = generate_identity(spec, 0);
    IdentityProfile id1 = generate_identity(spec, 1);
    IdentityProfile id4 = generate_identity(spec, 4);

    // Same pose slot, different frequency group.
    CHECK(id0.base_offsets == id4.base_offsets);
    CHECK(id0.motion_modes[0].frequency != id4.motion_modes[0].frequency);
    // Different pose slot, same frequency group.
    CHECK(id0.base_offsets != id1.base_offsets);
    CHECK(id0.motion_modes[0].frequency == id1.motion_modes[0].frequency);

    // Identities in one frequency group place their signature vertices on the
    // SAME four absolute positions, only assigned differently; the unordered
    // set of positions is invariant.
    const SkeletonPreset& preset = skeleton_preset("body17");
    const std::int64_t sig[] = {3, 4, 11, 12};
    auto positions = [&](const IdentityProfile& p) {
        std::vector<std::pair<double, double>> pos;
        for (std::int64_t v : sig)
            pos.emplace_back(preset.canonical_pose[static_cast<std::size_t>(v)][0] +
                                 p.base_offsets[static_cast<std::size_t>(v)][0],
                             preset.canonical_pose[static_cast<std::size_t>(v)][1] +
                                 p.base_offsets[static_cast<std::size_t>(v)][1]);
        std::sort(pos.begin(), pos.end());
        return pos;
    };
    auto p0 = positions(id0);
    for (std::int64_t i = 1; i < 4; ++i) {
        auto pi = positions(generate_identity(spec, i));
        REQUIRE(pi.size() == p0.size());
        for (std::size_t j = 0; j < p0.size(); ++j) {
            CHECK(pi[j].first == Catch::Approx(p0[j].first).margin(1e-12));
            CHECK(pi[j].second == Catch::Approx(p0[j].second).margin(1e-12));
        }
    }
    // Distinct pose slots really are distinct assignments.
    CHECK(id0.base_offsets != generate_identity(spec, 2).base_offsets);
    CHECK(id1.base_offsets != generate_identity(spec, 3).base_offsets);
}

TEST_CASE("signature vertices never carry motion") {
    for (CorpusMode mode : {CorpusMode::spatial_only, CorpusMode::temporal_only, CorpusMode::mixed}) {
        CorpusSpec spec = small_spec(mode, 3, 4, 0.02);
        IdentityProfile p = generate_identity(spec, 2);
        for (const auto& m : p.motion_modes)
            for (const auto& t : m.targets) {
                CHECK(t.vertex != 3);
                CHECK(t.vertex != 4);
                CHECK(t.vertex != 11);
                CHECK(t.vertex != 12);
            }
    }
}

TEST_CASE("corpus spec validation rejects unsupported shapes") {
    CorpusSpec spec = small_spec(CorpusMode::temporal_only, 1, 4, 0.02);
    spec.identity_count = 9;
    CHECK_THROWS_AS(spec.validate(), ValidationError);
    spec = small_spec(CorpusMode::mixed, 1, 4, 0.02);
    spec.identity_count = 33;
    CHECK_THROWS_AS(spec.validate(), ValidationError);
    spec = small_spec(CorpusMode::mixed, 1, 4, 0.02);
    spec.identity_count = 1;
    CHECK_THROWS_AS(spec.validate(), ValidationError);
    spec = small_spec(CorpusMode::mixed, 1, 1, 0.02);
    CHECK_THROWS_AS(spec.validate(), ValidationError);
    spec = small_spec(CorpusMode::mixed, 1, 4, -0.1);
    CHECK_THROWS_AS(spec.validate(), ValidationError);
    spec = small_spec(CorpusMode::mixed, 1, 4, 0.02);
    spec.vertex_count = 133;  // preset still body17
    CHECK_THROWS_AS(spec.validate(), ValidationError);
    spec = small_spec(CorpusMode::mixed, 1, 4, 0.02);
    CHECK_THROWS_AS(generate_identity(spec, 8), ValidationError);
    CHECK_THROWS_AS(generate_identity(spec, -1), ValidationError);
    // All generated frequencies sit below the half-cycle-per-frame limit.
    for (std::int64_t i = 0; i < 8; ++i) {
        IdentityProfile p = generate_identity(small_spec(CorpusMode::temporal_only, 1, 4, 0.0), i);
        for (const auto& m : p.motion_modes) {
            CHECK(m.frequency > 0.0);
            CHECK(m.frequency < 0.5);
        }
    }
}

TEST_CASE("rendering is deterministic per clip seed") {
    CorpusSpec spec = small_spec(CorpusMode::mixed, 9, 4, 0.02);
    IdentityProfile p = generate_identity(spec, 1);
    const SkeletonPreset& preset = skeleton_preset("body17");
    KeypointSequence a = render_sequence(p, preset, 60, clip_seed_for(spec.seed, 1, 0));
    KeypointSequence b = render_sequence(p, preset, 60, clip_seed_for(spec.seed, 1, 0));
    KeypointSequence c = render_sequence(p, preset, 60, clip_seed_for(spec.seed, 1, 1));
    CHECK(tensors_bit_equal(a.data, b.data));
    CHECK_FALSE(tensors_bit_equal(a.data, c.data));
}

TEST_CASE("a profile with no motion and no noise renders a frozen pose") {
    IdentityProfile p;
    p.identity_index = 0;
    p.noise_sigma = 0.0;
    p.base_offsets.assign(17, {0.0, 0.0});
    p.base_offsets[5] = {0.2, -0.1};
    const SkeletonPreset& preset = skeleton_preset("body17");
    KeypointSequence seq = render_sequence(p, preset, 10, 123);
    for (std::int64_t t = 0; t < 10; ++t)
        for (std::int64_t v = 0; v < 17; ++v) {
            CHECK(seq.at(0, t, v) == seq.at(0, 0, v));
            CHECK(seq.at(1, t, v) == seq.at(1, 0, v));
            CHECK(seq.at(2, t, v) == 1.0);
        }
    CHECK(seq.at(0, 0, 5) == preset.canonical_pose[5][0] + 0.2);
}

TEST_CASE("a single motion mode displaces its keypoint by the closed form") {
    IdentityProfile p;
    p.identity_index = 0;
    p.noise_sigma = 0.0;
    p.base_offsets.assign(17, {0.0, 0.0});
    p.base_offsets[9] = {0.05, -0.02};
    MotionMode m;
    m.group = "probe";
    m.targets = {{9, {0.8, -0.6}}};
    m.amplitude = 0.25;
    m.frequency = 7.0 / 60.0;
    m.phase = 0.0;
    p.motion_modes = {m};

    const std::uint64_t clip_seed = clip_seed_for(77, 0, 0);
    const SkeletonPreset& preset = skeleton_preset("body17");
    KeypointSequence seq = render_sequence(p, preset, 60, clip_seed);

    // The clip jitter is the first uniform draw of the clip's stream.
    CounterRng probe(clip_seed);
    const double jitter = probe.next_uniform(0.0, kTau);

    for (std::int64_t t = 0; t < 60; ++t) {
        const double s = 0.25 * std::sin(kTau * (7.0 / 60.0) * static_cast<double>(t) + jitter);
        CHECK(seq.at(0, t, 9) ==
              Catch::Approx(preset.canonical_pose[9][0] + 0.05 + s * 0.8).margin(1e-12));
        CHECK(seq.at(1, t, 9) ==
              Catch::Approx(preset.canonical_pose[9][1] - 0.02 + s * (-0.6)).margin(1e-12));
        // Untouched vertices sit exactly on the canonical pose.
        CHECK(seq.at(0, t, 3) == preset.canonical_pose[3][0]);
        CHECK(seq.at(1, t, 3) == preset.canonical_pose[3][1]);
    }
}

TEST_CASE("rendered frames stay roughly centered") {
    CorpusSpec spec = small_spec(CorpusMode::mixed, 21, 4, 0.02);
    IdentityProfile p = generate_identity(spec, 6);
    KeypointSequence seq =
        render_sequence(p, skeleton_preset("body17"), 60, clip_seed_for(spec.seed, 6, 0));
    for (std::int64_t t = 0; t < 60; ++t) {
        double cx = 0.0, cy = 0.0;
        for (std::int64_t v = 0; v < 17; ++v) {
            cx += seq.at(0, t, v);
            cy += seq.at(1, t, v);
        }
        CHECK(std::abs(cx / 17.0) < 0.1);
        CHECK(std::abs(cy / 17.0) < 0.1);
    }
}

TEST_CASE("time-averaged poses concentrate at the profile mean") {
    CorpusSpec spec = small_spec(CorpusMode::temporal_only, 31, 4, 0.02);
    IdentityProfile p = generate_identity(spec, 2);
    const SkeletonPreset& preset = skeleton_preset("body17");
    const double bound = 3.0 * spec.noise_sigma / std::sqrt(60.0);

    // Whole cycle counts make every sinusoid average to zero over the clip,
    // so a clip's time-averaged pose is the static pose plus the mean of 60
    // noise draws per coordinate. The per-coordinate bound of three standard
    // errors holds with probability 99.7%; over 100 renders x 34 coordinates
    // a handful of excursions are expected, so the per-sample assertion uses
    // a 95% pass-rate floor while the grand mean (a 6000-draw average) must
    // land well inside the bound.
    std::vector<double> grand(34, 0.0);
    std::int64_t inside = 0, total = 0;
    for (int clip = 0; clip < 100; ++clip) {
        KeypointSequence seq = render_sequence(p, preset, 60, clip_seed_for(spec.seed, 2, clip));
        std::vector<double> mp = mean_pose(seq);
        for (std::int64_t v = 0; v < 17; ++v) {
            const double ex = preset.canonical_pose[static_cast<std::size_t>(v)][0];
            const double ey = preset.canonical_pose[static_cast<std::size_t>(v)][1];
            const double dx = mp[static_cast<std::size_t>(2 * v)] - ex;
            const double dy = mp[static_cast<std::size_t>(2 * v + 1)] - ey;
            grand[static_cast<std::size_t>(2 * v)] += dx;
            grand[static_cast<std::size_t>(2 * v + 1)] += dy;
            inside += (std::abs(dx) <= bound) + (std::abs(dy) <= bound);
            total += 2;
        }
    }
    CHECK(static_cast<double>(inside) / static_cast<double>(total) >= 0.95);
    for (double g : grand) CHECK(std::abs(g / 100.0) <= bound);
}

TEST_CASE("corpus arithmetic, naming, and split sizes") {
    CorpusSpec spec = small_spec(CorpusMode::mixed, 1, 50, 0.02);
    CorpusBundle corpus = generate_corpus(spec);
    CHECK(corpus.clips.size() == 400);
    CHECK(corpus.split.train.size() == 320);
    CHECK(corpus.split.test.size() == 80);
    CHECK(corpus.labels.size() == 8);
    CHECK(corpus.labels.label(0) == "id_000");
    CHECK(corpus.labels.label(7) == "id_007");
    CHECK(corpus.clips[0].clip_id == "id_000_clip_000");
    CHECK(corpus.clips[50].clip_id == "id_001_clip_000");
    CHECK(corpus.clips[399].clip_id == "id_007_clip_049");
    CHECK(corpus.clips[399].identity == 7);
    for (const auto& clip : corpus.clips) {
        CHECK(clip.sequence.frames() == 60);
        CHECK(clip.sequence.vertices() == 17);
    }
}

TEST_CASE("corpus generation is bit-deterministic") {
    CorpusSpec spec = small_spec(CorpusMode::temporal_only, 13, 3, 0.02);
    CorpusBundle a = generate_corpus(spec);
    CorpusBundle b = generate_corpus(spec);
    REQUIRE(a.clips.size() == b.clips.size());
    for (std::size_t i = 0; i < a.clips.size(); ++i) {
        CHECK(a.clips[i].clip_id == b.clips[i].clip_id);
        CHECK(tensors_bit_equal(a.clips[i].sequence.data, b.clips[i].sequence.data));
    }
    CHECK(a.split.train == b.split.train);
    CHECK(a.split.test == b.split.test);
}

TEST_CASE("mean-pose nearest-centroid solves spatial-only corpora perfectly") {
    CorpusBundle corpus = generate_corpus(small_spec(CorpusMode::spatial_only, 5, 12, 0.01));
    CHECK(mean_pose_nearest_centroid_accuracy(corpus) == 1.0);
}

TEST_CASE("mean-pose nearest-centroid is blind to temporal-only corpora") {
    CorpusBundle corpus = generate_corpus(small_spec(CorpusMode::temporal_only, 42, 25, 0.02));
    const double acc = mean_pose_nearest_centroid_accuracy(corpus);
    // Chance for 8 identities is 0.125; the oracle has no signal to exceed it.
    CHECK(acc >= 0.025);
    CHECK(acc <= 0.225);
}

TEST_CASE("corpus meta files round-trip the generation spec") {
    CorpusSpec spec = small_spec(CorpusMode::temporal_only, 77, 9, 0.035);
    const std::string text = corpus_meta_json(spec);
    CorpusMeta meta = parse_corpus_meta(text);
    CHECK(meta.spec.identity_count == spec.identity_count);
    CHECK(meta.spec.clips_per_identity == spec.clips_per_identity);
    CHECK(meta.spec.frames_per_clip == spec.frames_per_clip);
    CHECK(meta.spec.vertex_count == spec.vertex_count);
    CHECK(meta.spec.seed == spec.seed);
    CHECK(meta.spec.mode == spec.mode);
    CHECK(meta.spec.noise_sigma == spec.noise_sigma);
    CHECK(meta.spec.preset == spec.preset);
    CHECK(meta.frame_skip == 1);

    CHECK_THROWS_AS(parse_corpus_meta("{]"), ParseError);
    CHECK_THROWS_AS(parse_corpus_meta("{}"), SchemaError);
    CHECK_THROWS_AS(parse_corpus_meta("[]"), SchemaError);
    std::string bad_mode = text;
    const std::size_t at = bad_mode.find("temporal-only");
    bad_mode.replace(at, std::strlen("temporal-only"), "sideways-only");
    CHECK_THROWS_AS(parse_corpus_meta(bad_mode), ValidationError);
}

TEST_CASE("identity labels and clip ids use fixed-width numbering") {
    CHECK(identity_label_for(0) == "id_000");
    CHECK(identity_label_for(42) == "id_042");
    CHECK(clip_id_for(7, 3) == "id_007_clip_003");
}
