#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "skelid/autograd.hpp"
#include "skelid/ops.hpp"
#include "skelid/rng.hpp"
#include "skelid/tensor.hpp"

namespace skelid {

// Checkpointable state: every tensor that defines a model — parameter values
// plus non-trained buffers such as batch-norm running statistics.
struct NamedTensor {
    std::string name;
    Tensor* tensor;
};
using StateDict = std::vector<NamedTensor>;

// Initialization stream keyed by (seed, parameter name): independent of
// construction order, so adding a layer never reshuffles another layer's
// initial values.
inline CounterRng parameter_init_rng(std::uint64_t seed, const std::string& name) {
    return CounterRng(derive_key({seed, fnv1a64("param-init"), fnv1a64(name)}));
}

// Fan-in-scaled uniform initialization: U(-g/sqrt(fan_in), +g/sqrt(fan_in)).
inline Tensor fan_in_uniform(const Shape& shape, std::int64_t fan_in, std::uint64_t seed,
                             const std::string& name, double gain = 1.0) {
    if (fan_in < 1) throw ValidationError("fan_in must be positive");
    CounterRng rng = parameter_init_rng(seed, name);
    const double bound = gain / std::sqrt(static_cast<double>(fan_in));
    Tensor out(shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = rng.next_uniform(-bound, bound);
    return out;
}

// Fully connected layer y = x·Wᵀ + b with W stored [out, in].
struct LinearParams {
    Parameter w;
    Parameter b;

    LinearParams(const std::string& name, std::int64_t out_features, std::int64_t in_features,
                 std::uint64_t seed, double gain = 1.0)
        : w(name + ".w",
            fan_in_uniform({out_features, in_features}, in_features, seed, name + ".w", gain)),
          b(name + ".b", Tensor(Shape{out_features})) {}

    Val forward(Tape& t, Val x) { return linear(t, x, t.param(w), t.param(b)); }

    void collect(std::vector<Parameter*>& params) {
        params.push_back(&w);
        params.push_back(&b);
    }
    void collect_state(StateDict& state) {
        state.push_back({w.name, &w.value});
        state.push_back({b.name, &b.value});
    }
};

// Batch normalization over the channel axis (axis 1), holding the learned
// scale/shift and the running statistics used in evaluation mode.
struct BatchNormParams {
    std::string name;
    Parameter gamma;
    Parameter beta;
    Tensor running_mean;
    Tensor running_var;

    BatchNormParams(const std::string& layer_name, std::int64_t channels)
        : name(layer_name),
          gamma(layer_name + ".gamma", Tensor::ones(Shape{channels})),
          beta(layer_name + ".beta", Tensor(Shape{channels})),
          running_mean(Shape{channels}),
          running_var(Tensor::ones(Shape{channels})) {}

    Val forward(Tape& t, Val x, bool training) {
        return batch_norm(t, x, t.param(gamma), t.param(beta), running_mean, running_var, training);
    }

    void collect(std::vector<Parameter*>& params) {
        params.push_back(&gamma);
        params.push_back(&beta);
    }
    void collect_state(StateDict& state) {
        state.push_back({gamma.name, &gamma.value});
        state.push_back({beta.name, &beta.value});
        state.push_back({name + ".running_mean", &running_mean});
        state.push_back({name + ".running_var", &running_var});
    }
};

}  // namespace skelid
