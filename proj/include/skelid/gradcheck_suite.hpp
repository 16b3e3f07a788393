#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "skelid/attention.hpp"
#include "skelid/fusion.hpp"
#include "skelid/gradcheck.hpp"
#include "skelid/graph_conv.hpp"
#include "skelid/ops.hpp"
#include "skelid/stream.hpp"

namespace skelid {

// Backward-rule verification table: one row per differentiable primitive,
// plus end-to-end rows for the composed blocks, streams, and the fusion
// path. Primitives must agree with central differences to 1e-6 relative
// error; deep compositions accumulate legitimate roundoff across many chained
// rules, so they get 1e-4.
inline constexpr double kPrimitiveGradTol = 1e-6;
inline constexpr double kCompositeGradTol = 1e-4;

namespace detail {

inline Tensor suite_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
    CounterRng rng = CounterRng::from(seed, "gradcheck-suite");
    return Tensor::randn(std::move(shape), rng, scale);
}

// Pushes every element at least 0.25 away from zero so kinked ops (relu) are
// probed on smooth territory; central differences straddle the kink otherwise.
inline Tensor away_from_zero(Tensor x) {
    for (std::int64_t i = 0; i < x.numel(); ++i) x[i] += x[i] >= 0.0 ? 0.25 : -0.25;
    return x;
}

// Builds the graph via `body` on a fresh tape each call; non-scalar outputs
// are reduced with mean_all.
template <typename Body>
double suite_check(std::vector<Parameter*> params, Body body, double atol = 0.0) {
    auto run = [&](bool with_grad) {
        Tape tape;
        std::vector<Val> vals;
        vals.reserve(params.size());
        for (auto* p : params) vals.push_back(tape.param(*p));
        Val out = body(tape, vals);
        Val loss = tape.value(out).numel() == 1 ? out : mean_all(tape, out);
        if (with_grad) tape.backward(loss);
        return tape.value(loss).item();
    };
    return finite_difference_check(run, params, 1e-5, atol);
}

}  // namespace detail

// Runs the whole table. `inject_broken_backward` appends a self-test row
// whose backward pass is deliberately wrong (the analytic gradient is scaled
// by 1.5 after backpropagation); it must show up as a FAIL, proving the
// checker can actually catch a bad rule.
inline std::vector<GradCheckRow> run_gradcheck_suite(bool inject_broken_backward = false) {
    using detail::away_from_zero;
    using detail::suite_check;
    using detail::suite_tensor;

    std::vector<GradCheckRow> rows;
    auto push_row = [&rows](const std::string& name, double tol, double err) {
        rows.push_back(GradCheckRow{name, err, tol, err < tol});
    };

    {
        Parameter a("a", suite_tensor({3, 4}, 1));
        Parameter b("b", suite_tensor({3, 4}, 2));
        push_row("add", kPrimitiveGradTol,
            suite_check({&a, &b}, [](Tape& t, const std::vector<Val>& v) { return add(t, v[0], v[1]); }));
    }
    {
        Parameter a("a", suite_tensor({3, 4}, 3));
        Parameter b("b", suite_tensor({3, 4}, 4));
        push_row("sub", kPrimitiveGradTol,
            suite_check({&a, &b}, [](Tape& t, const std::vector<Val>& v) { return sub(t, v[0], v[1]); }));
    }
    {
        Parameter a("a", suite_tensor({3, 4}, 5));
        Parameter b("b", suite_tensor({3, 4}, 6));
        push_row("mul", kPrimitiveGradTol,
            suite_check({&a, &b}, [](Tape& t, const std::vector<Val>& v) { return mul(t, v[0], v[1]); }));
    }
    {
        Parameter a("a", suite_tensor({3, 4}, 7));
        push_row("scale", kPrimitiveGradTol,
            suite_check({&a}, [](Tape& t, const std::vector<Val>& v) { return scale(t, v[0], -1.7); }));
    }
    {
        Parameter a("a", away_from_zero(suite_tensor({4, 5}, 8)));
        push_row("relu", kPrimitiveGradTol,
            suite_check({&a}, [](Tape& t, const std::vector<Val>& v) { return relu(t, v[0]); }));
    }
    {
        Parameter x("x", suite_tensor({2, 5}, 9));
        Parameter b("b", suite_tensor({5}, 10));
        push_row("add_bias", kPrimitiveGradTol,
            suite_check({&x, &b}, [](Tape& t, const std::vector<Val>& v) { return add_bias(t, v[0], v[1]); }));
    }
    {
        Parameter x("x", suite_tensor({2, 6}, 11));
        push_row("reshape", kPrimitiveGradTol, suite_check({&x}, [](Tape& t, const std::vector<Val>& v) {
                Val y = reshape(t, v[0], {3, 4});
                return mul(t, y, t.leaf(suite_tensor({3, 4}, 111)));
            }));
    }
    {
        Parameter x("x", suite_tensor({2, 3, 4}, 12));
        push_row("permute", kPrimitiveGradTol, suite_check({&x}, [](Tape& t, const std::vector<Val>& v) {
                Val y = permute(t, v[0], {2, 0, 1});
                return mul(t, y, t.leaf(suite_tensor({4, 2, 3}, 112)));
            }));
    }
    {
        Parameter x("x", suite_tensor({2, 3, 4}, 13));
        push_row("transpose_last2", kPrimitiveGradTol, suite_check({&x}, [](Tape& t, const std::vector<Val>& v) {
                Val y = transpose_last2(t, v[0]);
                return mul(t, y, t.leaf(suite_tensor({2, 4, 3}, 113)));
            }));
    }
    {
        Parameter a("a", suite_tensor({2, 3}, 14));
        Parameter b("b", suite_tensor({2, 5}, 15));
        push_row("concat_last", kPrimitiveGradTol, suite_check({&a, &b}, [](Tape& t, const std::vector<Val>& v) {
                Val y = concat_last(t, v[0], v[1]);
                return mul(t, y, t.leaf(suite_tensor({2, 8}, 114)));
            }));
    }
    {
        Parameter a("a", suite_tensor({3, 4}, 16));
        Parameter b("b", suite_tensor({4, 2}, 17));
        push_row("matmul", kPrimitiveGradTol,
            suite_check({&a, &b}, [](Tape& t, const std::vector<Val>& v) { return matmul(t, v[0], v[1]); }));
    }
    {
        Parameter a("a", suite_tensor({2, 3, 4}, 18));
        Parameter b("b", suite_tensor({2, 4, 5}, 19));
        push_row("matmul (batched)", kPrimitiveGradTol,
            suite_check({&a, &b}, [](Tape& t, const std::vector<Val>& v) { return matmul(t, v[0], v[1]); }));
    }
    {
        Parameter a("a", suite_tensor({2, 3, 4}, 20));
        Parameter b("b", suite_tensor({4, 5}, 21));
        push_row("matmul (broadcast right)", kPrimitiveGradTol,
            suite_check({&a, &b}, [](Tape& t, const std::vector<Val>& v) { return matmul(t, v[0], v[1]); }));
    }
    {
        Parameter x("x", suite_tensor({3, 4}, 22));
        push_row("sum_all", kPrimitiveGradTol,
            suite_check({&x}, [](Tape& t, const std::vector<Val>& v) { return sum_all(t, v[0]); }));
    }
    {
        Parameter x("x", suite_tensor({3, 4}, 23));
        push_row("mean_all", kPrimitiveGradTol,
            suite_check({&x}, [](Tape& t, const std::vector<Val>& v) { return mean_all(t, v[0]); }));
    }
    {
        Parameter x("x", suite_tensor({3, 4}, 24));
        push_row("mean_last", kPrimitiveGradTol, suite_check({&x}, [](Tape& t, const std::vector<Val>& v) {
                Val y = mean_last(t, v[0]);
                return mul(t, y, t.leaf(suite_tensor({3}, 115)));
            }));
    }
    {
        // A plain mean of softmax rows is constant (rows sum to one), so the
        // loss weights each probability with a fixed random tensor instead.
        Parameter x("x", suite_tensor({3, 5}, 25));
        push_row("softmax_rows", kPrimitiveGradTol, suite_check({&x}, [](Tape& t, const std::vector<Val>& v) {
                Val y = softmax_rows(t, v[0]);
                return mul(t, y, t.leaf(suite_tensor({3, 5}, 116)));
            }));
    }
    {
        Parameter x("x", suite_tensor({3, 6}, 26));
        push_row("l2_normalize", kPrimitiveGradTol, suite_check({&x}, [](Tape& t, const std::vector<Val>& v) {
                Val y = l2_normalize(t, v[0]);
                return mul(t, y, t.leaf(suite_tensor({3, 6}, 117)));
            }));
    }
    {
        Parameter x("x", suite_tensor({4, 5}, 27));
        push_row("dropout (training)", kPrimitiveGradTol, suite_check({&x}, [](Tape& t, const std::vector<Val>& v) {
                return dropout(t, v[0], 0.3, true, 7777);
            }));
    }
    {
        // A plain mean of batch-normed output is pinned to the shift, and a
        // sum of squares is pinned by the normalization itself (the squared
        // activations per channel always total N, up to the epsilon term), so
        // each element is weighted with a fixed random tensor before reducing.
        Parameter x("x", suite_tensor({4, 3, 5}, 28));
        Parameter gamma("gamma", away_from_zero(suite_tensor({3}, 29, 0.3)));
        Parameter beta("beta", suite_tensor({3}, 30, 0.3));
        const Tensor weights = suite_tensor({4, 3, 5}, 118);
        Tensor running_mean({3});
        Tensor running_var({3});
        for (std::int64_t i = 0; i < 3; ++i) running_var[i] = 1.0;
        push_row("batch_norm (training)", kPrimitiveGradTol,
            suite_check({&x, &gamma, &beta}, [&](Tape& t, const std::vector<Val>& v) {
                Tensor rm = running_mean, rv = running_var;
                Val y = batch_norm(t, v[0], v[1], v[2], rm, rv, true);
                return sum_all(t, mul(t, y, t.leaf(weights)));
            }));
    }
    {
        Parameter logits("logits", suite_tensor({4, 6}, 31));
        const std::vector<std::int64_t> labels{0, 2, 5, 1};
        push_row("cross_entropy", kPrimitiveGradTol,
            suite_check({&logits}, [&labels](Tape& t, const std::vector<Val>& v) {
                return cross_entropy(t, v[0], labels);
            }));
    }
    {
        Parameter x("x", suite_tensor({2, 3, 4, 5}, 32));
        const Tensor m = suite_tensor({5, 5}, 33);
        push_row("vertex_mix", kPrimitiveGradTol, suite_check({&x}, [&m](Tape& t, const std::vector<Val>& v) {
                return vertex_mix(t, v[0], m);
            }));
    }
    {
        Parameter x("x", suite_tensor({2, 3, 4, 5}, 34));
        Parameter w("w", suite_tensor({6, 3}, 35));
        push_row("channel_mix", kPrimitiveGradTol,
            suite_check({&x, &w}, [](Tape& t, const std::vector<Val>& v) { return channel_mix(t, v[0], v[1]); }));
    }
    {
        Parameter x("x", suite_tensor({2, 3, 6, 4}, 36));
        Parameter w("w", suite_tensor({3, 3}, 37));
        push_row("temporal_conv", kPrimitiveGradTol,
            suite_check({&x, &w}, [](Tape& t, const std::vector<Val>& v) { return temporal_conv(t, v[0], v[1], 1); }));
    }
    {
        Parameter x("x", suite_tensor({2, 3, 6, 4}, 38));
        Parameter w("w", suite_tensor({3, 5}, 39));
        push_row("temporal_conv (stride 2)", kPrimitiveGradTol,
            suite_check({&x, &w}, [](Tape& t, const std::vector<Val>& v) { return temporal_conv(t, v[0], v[1], 2); }));
    }
    {
        Parameter x("x", suite_tensor({2, 3, 6, 4}, 40));
        push_row("temporal_subsample (stride 2)", kPrimitiveGradTol,
            suite_check({&x}, [](Tape& t, const std::vector<Val>& v) { return temporal_subsample(t, v[0], 2); }));
    }
    {
        Parameter x("x", suite_tensor({3, 4}, 41));
        Parameter w("w", suite_tensor({5, 4}, 42));
        Parameter b("b", suite_tensor({5}, 43));
        push_row("linear", kPrimitiveGradTol, suite_check({&x, &w, &b}, [](Tape& t, const std::vector<Val>& v) {
                return linear(t, v[0], v[1], v[2]);
            }));
    }

    // ----- composed blocks: tolerance 1e-4, absolute floor 1e-7 for
    // structurally dead coordinates (relu- or dropout-silenced units). -----

    const SkeletonGraph tiny_graph = build_skeleton_graph(4, {{0, 1}, {1, 2}, {2, 3}});
    {
        STGCNBlockConfig cfg{3, 4, 3, 1, true};
        STGCNBlockParams block("gc", cfg, 13);
        Parameter x("x", suite_tensor({2, 3, 5, 4}, 44, 0.7));
        std::vector<Parameter*> params{&x};
        block.collect(params);
        push_row("stgcn-block", kCompositeGradTol, suite_check(params, [&](Tape& t, const std::vector<Val>& v) {
                Val y = block.forward(t, v[0], tiny_graph, true);
                return mean_all(t, mul(t, y, y));
            }, 1e-7));
    }
    {
        STGCNBlockConfig cfg{3, 4, 3, 2, true};
        STGCNBlockParams block("gs", cfg, 14);
        Parameter x("x", suite_tensor({2, 3, 5, 4}, 45, 0.7));
        std::vector<Parameter*> params{&x};
        block.collect(params);
        push_row("stgcn-block (strided skip)", kCompositeGradTol,
            suite_check(params, [&](Tape& t, const std::vector<Val>& v) {
                Val y = block.forward(t, v[0], tiny_graph, true);
                return mean_all(t, mul(t, y, y));
            }, 1e-7));
    }
    for (AttentionAxis axis : {AttentionAxis::spatial, AttentionAxis::temporal}) {
        AttentionConfig cfg{2, 0.5, 0.5, 4};
        AttentionBlockParams block("ab", cfg, axis, 11);
        Parameter x("x", suite_tensor({2, 4, 3, 2}, axis == AttentionAxis::spatial ? 46 : 47, 0.7));
        std::vector<Parameter*> params{&x};
        block.collect(params);
        push_row(axis == AttentionAxis::spatial ? "attention-block (keypoint axis)"
                                           : "attention-block (frame axis)",
            kCompositeGradTol, suite_check(params, [&](Tape& t, const std::vector<Val>& v) {
                return mean_all(t, block.forward(t, v[0], true));
            }, 1e-7));
    }

    auto tiny_stream_config = [](StreamKind kind) {
        StreamConfig cfg;
        cfg.kind = kind;
        cfg.num_classes = 3;
        cfg.vertex_count = 4;
        cfg.stem_channels = {3, 8};
        cfg.stem_temporal_kernel = 3;
        cfg.attention_layers = 1;
        cfg.heads = 2;
        cfg.dk_ratio = 0.5;
        cfg.dv_ratio = 0.5;
        cfg.embedding_dim = 8;
        return cfg;
    };
    for (StreamKind kind : {StreamKind::spatial, StreamKind::temporal}) {
        StreamModel model(tiny_stream_config(kind), tiny_graph, 91);
        Parameter x("input", suite_tensor({2, 3, 6, 4, 1}, kind == StreamKind::spatial ? 48 : 49, 0.7));
        std::vector<Parameter*> params{&x};
        model.collect(params);
        const std::vector<std::int64_t> labels{0, 2};
        push_row(kind == StreamKind::spatial ? "stream (spatial)" : "stream (temporal)", kCompositeGradTol,
            suite_check(params, [&](Tape& t, const std::vector<Val>& v) {
                StreamOutput out = model.forward(t, v[0], true);
                return cross_entropy(t, out.logits, labels);
            }, 1e-7));
    }
    {
        FusionHeadConfig cfg{8, 8, 4, 3, 0.2};
        FusionHeadParams head("fh", cfg, 23);
        Parameter x("x", suite_tensor({2, 8}, 50, 0.7));
        std::vector<Parameter*> params{&x};
        head.collect(params);
        const std::vector<std::int64_t> labels{0, 2};
        push_row("fusion-head", kCompositeGradTol, suite_check(params, [&](Tape& t, const std::vector<Val>& v) {
                return cross_entropy(t, head.forward(t, v[0], true, 555), labels);
            }, 1e-7));
    }
    {
        // Both streams, embedding fusion, and the three-way weighted loss in
        // one differentiable graph.
        StreamModel str(tiny_stream_config(StreamKind::spatial), tiny_graph, 92);
        StreamModel ttr(tiny_stream_config(StreamKind::temporal), tiny_graph, 93);
        FusionHeadConfig hcfg{16, 8, 4, 3, 0.2};
        FusionHeadParams head("fu", hcfg, 94);
        Parameter x("input", suite_tensor({2, 3, 6, 4, 1}, 51, 0.7));
        std::vector<Parameter*> params{&x};
        str.collect(params);
        ttr.collect(params);
        head.collect(params);
        const std::vector<std::int64_t> labels{1, 2};
        push_row("two-stream fusion (end to end)", kCompositeGradTol,
            suite_check(params, [&](Tape& t, const std::vector<Val>& v) {
                StreamOutput so = str.forward(t, v[0], true);
                StreamOutput to = ttr.forward(t, v[0], true);
                Val fused = fuse_embeddings(t, so.embedding, to.embedding);
                Val fused_logits = head.forward(t, fused, true, 555);
                return combine_fusion_losses(t, cross_entropy(t, so.logits, labels),
                                             cross_entropy(t, to.logits, labels),
                                             cross_entropy(t, fused_logits, labels), fusion_loss_weights());
            }, 1e-7));
    }

    if (inject_broken_backward) {
        Parameter x("x", suite_tensor({3, 4}, 52));
        auto run = [&x](bool with_grad) {
            Tape t;
            Val v = t.param(x);
            Val loss = mean_all(t, mul(t, v, v));
            if (with_grad) {
                t.backward(loss);
                for (std::int64_t i = 0; i < x.grad.numel(); ++i) x.grad[i] *= 1.5;
            }
            return t.value(loss).item();
        };
        push_row("mul (backward deliberately broken; self-test)", kPrimitiveGradTol,
            finite_difference_check(run, {&x}));
    }

    return rows;
}

}  // namespace skelid
