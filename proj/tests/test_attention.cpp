#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include "skelid/attention.hpp"
#include "skelid/gradcheck.hpp"

using namespace skelid;

namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape() == b.shape());
    double worst = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::fabs(a[i] - b[i]));
    return worst;
}

// Independent reference attention written as plain nested loops over plain
// tensors: project, dot, exponentiate (no max subtraction), average, project
// back. Scale factor is passed in so tests can also probe wrong scalings.
struct BruteAttention {
    Tensor scores;  // [N, H, L, L]
    Tensor output;  // [N, L, C]
};

Tensor project(const Tensor& tokens, const Tensor& w) {
    const std::int64_t n = tokens.dim(0), l = tokens.dim(1), c = tokens.dim(2), d = w.dim(1);
    Tensor out({n, l, d});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < l; ++j)
            for (std::int64_t k = 0; k < d; ++k) {
                double acc = 0.0;
                for (std::int64_t e = 0; e < c; ++e) acc += tokens.at({i, j, e}) * w.at({e, k});
                out.at({i, j, k}) = acc;
            }
    return out;
}

BruteAttention brute_force_attention(const Tensor& tokens, const Tensor& wq, const Tensor& wk,
                                     const Tensor& wv, const Tensor& wo, std::int64_t heads,
                                     double scale_factor) {
    const std::int64_t n = tokens.dim(0), l = tokens.dim(1);
    const std::int64_t dk = wq.dim(1), dv = wv.dim(1), c_out = wo.dim(1);
    const std::int64_t dkh = dk / heads, dvh = dv / heads;
    Tensor q = project(tokens, wq), k = project(tokens, wk), v = project(tokens, wv);

    BruteAttention out{Tensor({n, heads, l, l}), Tensor({n, l, c_out})};
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t h = 0; h < heads; ++h)
            for (std::int64_t a = 0; a < l; ++a) {
                std::vector<double> expo(static_cast<std::size_t>(l));
                double z = 0.0;
                for (std::int64_t b = 0; b < l; ++b) {
                    double dot = 0.0;
                    for (std::int64_t d = 0; d < dkh; ++d)
                        dot += q.at({i, a, h * dkh + d}) * k.at({i, b, h * dkh + d});
                    expo[static_cast<std::size_t>(b)] = std::exp(dot * scale_factor);
                    z += expo[static_cast<std::size_t>(b)];
                }
                for (std::int64_t b = 0; b < l; ++b)
                    out.scores.at({i, h, a, b}) = expo[static_cast<std::size_t>(b)] / z;
            }

    Tensor mixed({n, l, dv});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t h = 0; h < heads; ++h)
            for (std::int64_t a = 0; a < l; ++a)
                for (std::int64_t d = 0; d < dvh; ++d) {
                    double acc = 0.0;
                    for (std::int64_t b = 0; b < l; ++b)
                        acc += out.scores.at({i, h, a, b}) * v.at({i, b, h * dvh + d});
                    mixed.at({i, a, h * dvh + d}) = acc;
                }
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t a = 0; a < l; ++a)
            for (std::int64_t e = 0; e < c_out; ++e) {
                double acc = 0.0;
                for (std::int64_t d = 0; d < dv; ++d) acc += mixed.at({i, a, d}) * wo.at({d, e});
                out.output.at({i, a, e}) = acc;
            }
    return out;
}

struct RandomTrial {
    AttentionConfig cfg;
    Tensor tokens, wq, wk, wv, wo;
};

RandomTrial make_trial(std::uint64_t trial) {
    CounterRng rng = CounterRng::from(99, "attention-trial", trial);
    const std::int64_t head_choices[] = {1, 2, 4};
    const double ratio_choices[] = {0.25, 0.5, 1.0};
    AttentionConfig cfg;
    cfg.heads = head_choices[trial % 3];
    cfg.dk_ratio = ratio_choices[(trial / 3) % 3];
    cfg.dv_ratio = ratio_choices[(trial / 9) % 3];
    cfg.model_channels = 4 + static_cast<std::int64_t>(trial % 5);
    const std::int64_t n = 1 + static_cast<std::int64_t>(trial % 2);
    const std::int64_t l = 1 + static_cast<std::int64_t>(trial % 5);
    RandomTrial out;
    out.cfg = cfg;
    out.tokens = Tensor::randn({n, l, cfg.model_channels}, rng);
    out.wq = Tensor::randn({cfg.model_channels, cfg.dk_total()}, rng, 0.5);
    out.wk = Tensor::randn({cfg.model_channels, cfg.dk_total()}, rng, 0.5);
    out.wv = Tensor::randn({cfg.model_channels, cfg.dv_total()}, rng, 0.5);
    out.wo = Tensor::randn({cfg.dv_total(), cfg.model_channels}, rng, 0.5);
    return out;
}

}  // namespace

TEST_CASE("attention matches a brute-force reference over random trials") {
    for (std::uint64_t trial = 0; trial < 30; ++trial) {
        RandomTrial tr = make_trial(trial);
        const double scale_factor =
            1.0 / std::sqrt(static_cast<double>(tr.cfg.dk_per_head()));
        BruteAttention want = brute_force_attention(tr.tokens, tr.wq, tr.wk, tr.wv, tr.wo,
                                                    tr.cfg.heads, scale_factor);
        Tape t;
        Val tokens = t.leaf(tr.tokens);
        Val scores = attention_scores_tokens(t, tokens, tr.cfg, t.leaf(tr.wq), t.leaf(tr.wk));
        Val full = multi_head_attention_tokens(t, tokens, tr.cfg, t.leaf(tr.wq), t.leaf(tr.wk),
                                               t.leaf(tr.wv), t.leaf(tr.wo));
        INFO("trial " << trial);
        CHECK(max_abs_diff(t.value(scores), want.scores) < 1e-12);
        CHECK(max_abs_diff(t.value(full), want.output) < 1e-12);
    }
}

TEST_CASE("attention rows are probability distributions") {
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
        RandomTrial tr = make_trial(trial + 100);
        Tape t;
        Val scores =
            attention_scores_tokens(t, t.leaf(tr.tokens), tr.cfg, t.leaf(tr.wq), t.leaf(tr.wk));
        const Tensor& s = t.value(scores);
        const std::int64_t l = s.dim(3);
        const std::int64_t rows = s.numel() / l;
        for (std::int64_t r = 0; r < rows; ++r) {
            double sum = 0.0;
            for (std::int64_t j = 0; j < l; ++j) {
                const double p = s[r * l + j];
                CHECK(p >= 0.0);
                sum += p;
            }
            CHECK(std::fabs(sum - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("score scaling divides by the square root of the head width") {
    AttentionConfig cfg{1, 0.5, 0.5, 8};
    REQUIRE(cfg.dk_per_head() == 4);
    CounterRng rng(7);
    Tensor tokens = Tensor::randn({1, 4, 8}, rng, 1.5);
    Tensor wq = Tensor::randn({8, 4}, rng, 0.8);
    Tensor wk = Tensor::randn({8, 4}, rng, 0.8);
    Tensor wv = Tensor::randn({8, 4}, rng, 0.8);
    Tensor wo = Tensor::randn({4, 8}, rng, 0.8);

    Tape t;
    Val scores = attention_scores_tokens(t, t.leaf(tokens), cfg, t.leaf(wq), t.leaf(wk));
    BruteAttention sqrt_scaled =
        brute_force_attention(tokens, wq, wk, wv, wo, 1, 1.0 / std::sqrt(4.0));
    BruteAttention width_scaled = brute_force_attention(tokens, wq, wk, wv, wo, 1, 1.0 / 4.0);

    CHECK(max_abs_diff(t.value(scores), sqrt_scaled.scores) < 1e-12);
    // Dividing by the full width instead would visibly flatten the rows.
    CHECK(max_abs_diff(t.value(scores), width_scaled.scores) > 1e-3);
}

TEST_CASE("a single token attends only to itself") {
    AttentionConfig cfg{2, 0.5, 0.5, 6};
    CounterRng rng(13);
    Tensor tokens = Tensor::randn({3, 1, 6}, rng);
    Tensor wq = Tensor::randn({6, cfg.dk_total()}, rng);
    Tensor wk = Tensor::randn({6, cfg.dk_total()}, rng);
    Tape t;
    Val scores = attention_scores_tokens(t, t.leaf(tokens), cfg, t.leaf(wq), t.leaf(wk));
    REQUIRE(t.value(scores).shape() == Shape{3, 2, 1, 1});
    for (std::int64_t i = 0; i < t.value(scores).numel(); ++i) CHECK(t.value(scores)[i] == 1.0);
}

TEST_CASE("zero query weights give uniform attention over tokens") {
    AttentionConfig cfg{2, 0.5, 0.5, 4};
    CounterRng rng(17);
    const std::int64_t l = 5;
    Tensor tokens = Tensor::randn({2, l, 4}, rng);
    Tensor wq(Shape{4, cfg.dk_total()});
    Tensor wk = Tensor::randn({4, cfg.dk_total()}, rng);
    Tensor wv = Tensor::randn({4, cfg.dv_total()}, rng);
    Tensor wo = Tensor::randn({cfg.dv_total(), 4}, rng);

    Tape t;
    Val tl = t.leaf(tokens);
    Val scores = attention_scores_tokens(t, tl, cfg, t.leaf(wq), t.leaf(wk));
    for (std::int64_t i = 0; i < t.value(scores).numel(); ++i)
        CHECK(t.value(scores)[i] == 1.0 / static_cast<double>(l));

    // Every output row collapses to the same mean-projected token.
    Val full =
        multi_head_attention_tokens(t, tl, cfg, t.leaf(wq), t.leaf(wk), t.leaf(wv), t.leaf(wo));
    const Tensor& o = t.value(full);
    for (std::int64_t n = 0; n < 2; ++n)
        for (std::int64_t a = 1; a < l; ++a)
            for (std::int64_t c = 0; c < 4; ++c)
                CHECK(std::fabs(o.at({n, a, c}) - o.at({n, 0, c})) < 1e-12);
}

TEST_CASE("keypoint attention is equivariant to keypoint relabeling") {
    AttentionConfig cfg{2, 0.5, 0.5, 4};
    CounterRng rng(19);
    const std::int64_t v = 5;
    Tensor x = Tensor::randn({2, 4, 3, v}, rng);
    Tensor wq = Tensor::randn({4, cfg.dk_total()}, rng);
    Tensor wk = Tensor::randn({4, cfg.dk_total()}, rng);
    Tensor wv = Tensor::randn({4, cfg.dv_total()}, rng);
    Tensor wo = Tensor::randn({cfg.dv_total(), 4}, rng);
    const std::int64_t perm[v] = {3, 0, 4, 1, 2};  // new index -> old index

    Tensor xp(x.shape());
    for (std::int64_t b = 0; b < 2; ++b)
        for (std::int64_t c = 0; c < 4; ++c)
            for (std::int64_t f = 0; f < 3; ++f)
                for (std::int64_t j = 0; j < v; ++j)
                    xp.at({b, c, f, j}) = x.at({b, c, f, perm[j]});

    Tape t;
    auto run = [&](const Tensor& input) {
        return t.value(spatial_self_attention(t, t.leaf(input), cfg, t.leaf(wq), t.leaf(wk),
                                              t.leaf(wv), t.leaf(wo)));
    };
    Tensor base = run(x);
    Tensor permuted = run(xp);
    double worst = 0.0;
    for (std::int64_t b = 0; b < 2; ++b)
        for (std::int64_t c = 0; c < 4; ++c)
            for (std::int64_t f = 0; f < 3; ++f)
                for (std::int64_t j = 0; j < v; ++j)
                    worst = std::max(worst, std::fabs(permuted.at({b, c, f, j}) -
                                                      base.at({b, c, f, perm[j]})));
    CHECK(worst < 1e-9);
}

TEST_CASE("frame attention is equivariant to frame reordering") {
    AttentionConfig cfg{2, 0.5, 0.5, 4};
    CounterRng rng(29);
    const std::int64_t frames = 4;
    Tensor x = Tensor::randn({2, 4, frames, 3}, rng);
    Tensor wq = Tensor::randn({4, cfg.dk_total()}, rng);
    Tensor wk = Tensor::randn({4, cfg.dk_total()}, rng);
    Tensor wv = Tensor::randn({4, cfg.dv_total()}, rng);
    Tensor wo = Tensor::randn({cfg.dv_total(), 4}, rng);
    const std::int64_t perm[frames] = {2, 0, 3, 1};

    Tensor xp(x.shape());
    for (std::int64_t b = 0; b < 2; ++b)
        for (std::int64_t c = 0; c < 4; ++c)
            for (std::int64_t f = 0; f < frames; ++f)
                for (std::int64_t j = 0; j < 3; ++j)
                    xp.at({b, c, f, j}) = x.at({b, c, perm[f], j});

    Tape t;
    auto run = [&](const Tensor& input) {
        return t.value(temporal_self_attention(t, t.leaf(input), cfg, t.leaf(wq), t.leaf(wk),
                                               t.leaf(wv), t.leaf(wo)));
    };
    Tensor base = run(x);
    Tensor permuted = run(xp);
    double worst = 0.0;
    for (std::int64_t b = 0; b < 2; ++b)
        for (std::int64_t c = 0; c < 4; ++c)
            for (std::int64_t f = 0; f < frames; ++f)
                for (std::int64_t j = 0; j < 3; ++j)
                    worst = std::max(worst, std::fabs(permuted.at({b, c, f, j}) -
                                                      base.at({b, c, perm[f], j})));
    CHECK(worst < 1e-9);
}

TEST_CASE("frame attention maps constant-in-time input to constant-in-time output") {
    AttentionConfig cfg{2, 0.5, 0.5, 4};
    CounterRng rng(31);
    Tensor frame = Tensor::randn({2, 4, 1, 3}, rng);
    Tensor x({2, 4, 6, 3});
    for (std::int64_t b = 0; b < 2; ++b)
        for (std::int64_t c = 0; c < 4; ++c)
            for (std::int64_t f = 0; f < 6; ++f)
                for (std::int64_t j = 0; j < 3; ++j)
                    x.at({b, c, f, j}) = frame.at({b, c, 0, j});
    Tensor wq = Tensor::randn({4, cfg.dk_total()}, rng);
    Tensor wk = Tensor::randn({4, cfg.dk_total()}, rng);
    Tensor wv = Tensor::randn({4, cfg.dv_total()}, rng);
    Tensor wo = Tensor::randn({cfg.dv_total(), 4}, rng);

    Tape t;
    const Tensor& out = t.value(temporal_self_attention(t, t.leaf(x), cfg, t.leaf(wq), t.leaf(wk),
                                                        t.leaf(wv), t.leaf(wo)));
    for (std::int64_t b = 0; b < 2; ++b)
        for (std::int64_t c = 0; c < 4; ++c)
            for (std::int64_t f = 1; f < 6; ++f)
                for (std::int64_t j = 0; j < 3; ++j)
                    CHECK(std::fabs(out.at({b, c, f, j}) - out.at({b, c, 0, j})) < 1e-9);
}

TEST_CASE("projection widths round to the nearest head multiple") {
    CHECK(AttentionConfig::rounded_width(0.25, 64, 8) == 16);
    CHECK(AttentionConfig::rounded_width(0.25, 17, 8) == 8);   // 4.25 rounds up to one slice each
    CHECK(AttentionConfig::rounded_width(0.5, 12, 8) == 8);    // 6 -> nearest multiple of 8
    CHECK(AttentionConfig::rounded_width(1.0, 20, 8) == 24);   // 20 is equidistant; ties go up
    CHECK(AttentionConfig::rounded_width(0.25, 16, 4) == 4);
    CHECK(AttentionConfig::rounded_width(0.75, 10, 3) == 9);
    CHECK(AttentionConfig::rounded_width(0.1, 4, 2) == 2);     // never collapses to zero

    AttentionConfig cfg{8, 0.25, 0.25, 64};
    CHECK(cfg.dk_total() == 16);
    CHECK(cfg.dk_per_head() == 2);
    CHECK_NOTHROW(cfg.validate());
    cfg.heads = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg.heads = 8;
    cfg.dk_ratio = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg.dk_ratio = 0.25;
    cfg.model_channels = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("attention block with zeroed projections is relu of the input") {
    AttentionConfig cfg{2, 0.5, 0.5, 4};
    AttentionBlockParams block("ab", cfg, AttentionAxis::spatial, 3);
    block.wq.value.fill(0.0);
    block.wk.value.fill(0.0);
    block.wv.value.fill(0.0);
    block.wo.value.fill(0.0);
    CounterRng rng(37);
    Tensor x = Tensor::randn({2, 4, 3, 2}, rng);
    Tape t;
    const Tensor& out = t.value(block.forward(t, t.leaf(x), true));
    REQUIRE(out.shape() == x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(out[i] == std::max(x[i], 0.0));
}

TEST_CASE("attention block keeps the activation shape") {
    AttentionConfig cfg{2, 0.5, 0.5, 6};
    CounterRng rng(41);
    Tensor x = Tensor::randn({2, 6, 4, 3}, rng);
    for (AttentionAxis axis : {AttentionAxis::spatial, AttentionAxis::temporal}) {
        AttentionBlockParams block("shape", cfg, axis, 5);
        Tape t;
        CHECK(t.value(block.forward(t, t.leaf(x), true)).shape() == x.shape());
    }
}

TEST_CASE("attention block gradients match finite differences") {
    AttentionConfig cfg{2, 0.5, 0.5, 4};
    CounterRng rng(43);

    for (AttentionAxis axis : {AttentionAxis::spatial, AttentionAxis::temporal}) {
        AttentionBlockParams block("agrad", cfg, axis, 11);
        Parameter px("x", Tensor::randn({2, 4, 3, 2}, rng, 0.7));
        std::vector<Parameter*> params{&px};
        block.collect(params);
        auto run = [&](bool backward) {
            Tape t;
            Val loss = mean_all(t, block.forward(t, t.param(px), true));
            if (backward) t.backward(loss);
            return t.value(loss).item();
        };
        INFO((axis == AttentionAxis::spatial ? "keypoint axis" : "frame axis"));
        CHECK(finite_difference_check(run, params, 1e-5, 1e-7) < 1e-5);
    }
}
