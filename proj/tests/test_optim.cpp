#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "skelid/optim.hpp"

using namespace skelid;

TEST_CASE("plain sgd step moves against the gradient") {
    Parameter p("p", Tensor({1}));
    p.grad[0] = 1.0;
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::sgd_momentum;
    cfg.learning_rate = 0.1;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.0;
    Optimizer opt(cfg, {&p});
    opt.step();
    REQUIRE(p.value[0] == Catch::Approx(-0.1).margin(1e-15));
}

TEST_CASE("sgd momentum accumulates velocity") {
    Parameter p("p", Tensor({1}));
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::sgd_momentum;
    cfg.learning_rate = 1.0;
    cfg.momentum = 0.9;
    Optimizer opt(cfg, {&p});
    p.grad[0] = 1.0;
    opt.step();  // buf = 1, θ = -1
    REQUIRE(p.value[0] == Catch::Approx(-1.0));
    p.grad[0] = 1.0;
    opt.step();  // buf = 1.9, θ = -2.9
    REQUIRE(p.value[0] == Catch::Approx(-2.9));
}

TEST_CASE("first adam step has magnitude approximately lr") {
    for (double g : {0.5, -2.0, 1e-3}) {
        Parameter p("p", Tensor({1}));
        p.grad[0] = g;
        OptimizerConfig cfg;
        cfg.kind = OptimizerKind::adam;
        cfg.learning_rate = 0.01;
        Optimizer opt(cfg, {&p});
        opt.step();
        // Bias correction makes the first update lr·g/(|g| + ε').
        REQUIRE(std::fabs(std::fabs(p.value[0]) - 0.01) < 1e-6);
        REQUIRE(std::signbit(p.value[0]) == (g > 0.0));
    }
}

TEST_CASE("weight decay alone shrinks parameters multiplicatively") {
    Parameter p("p", Tensor({1}, {2.0}));
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::sgd_momentum;
    cfg.learning_rate = 0.01;
    cfg.weight_decay = 1e-4;
    Optimizer opt(cfg, {&p});
    opt.step();  // grad = 0, so update = -lr·λ·θ
    REQUIRE(p.value[0] == Catch::Approx(2.0 * (1.0 - 1e-6)).epsilon(1e-12));
}

TEST_CASE("learning rate schedule drops tenfold at epochs 60 and 90") {
    REQUIRE(lr_schedule(0) == 1.0);
    REQUIRE(lr_schedule(59) == 1.0);
    REQUIRE(lr_schedule(60) == 0.1);
    REQUIRE(lr_schedule(89) == 0.1);
    REQUIRE(lr_schedule(90) == 0.01);
    REQUIRE(lr_schedule(119) == 0.01);
}

TEST_CASE("optimizer steps are deterministic given state and gradients") {
    auto run = []() {
        Parameter p("p", Tensor({3}, {0.3, -0.2, 1.0}));
        OptimizerConfig cfg;
        cfg.kind = OptimizerKind::adam;
        cfg.learning_rate = 0.005;
        cfg.weight_decay = 1e-4;
        Optimizer opt(cfg, {&p});
        for (int s = 0; s < 5; ++s) {
            p.grad[0] = 0.1 * s;
            p.grad[1] = -0.2;
            p.grad[2] = 0.05;
            opt.step(lr_schedule(s));
        }
        return p.value;
    };
    Tensor a = run();
    Tensor b = run();
    for (std::int64_t i = 0; i < a.numel(); ++i) REQUIRE(a[i] == b[i]);
}

TEST_CASE("zero_grad clears every registered parameter") {
    Parameter p("p", Tensor({2}));
    Parameter q("q", Tensor({2}));
    p.grad.fill(3.0);
    q.grad.fill(4.0);
    OptimizerConfig cfg;
    Optimizer opt(cfg, {&p, &q});
    opt.zero_grad();
    for (std::int64_t i = 0; i < 2; ++i) {
        REQUIRE(p.grad[i] == 0.0);
        REQUIRE(q.grad[i] == 0.0);
    }
}

TEST_CASE("optimizer state is exposed for serialization") {
    Parameter p("layer.weight", Tensor({2}));
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::adam;
    Optimizer opt(cfg, {&p});
    std::vector<std::pair<std::string, Tensor*>> state;
    opt.collect_state(state);
    REQUIRE(state.size() == 2);
    REQUIRE(state[0].first == "layer.weight#adam_m");
    REQUIRE(state[1].first == "layer.weight#adam_v");

    OptimizerConfig scfg;
    scfg.kind = OptimizerKind::sgd_momentum;
    Optimizer sopt(scfg, {&p});
    state.clear();
    sopt.collect_state(state);
    REQUIRE(state.size() == 1);
    REQUIRE(state[0].first == "layer.weight#momentum");
}
