#pragma once

#include <cstdint>
#include <string>

#include "skelid/layers.hpp"
#include "skelid/ops.hpp"
#include "skelid/rng.hpp"

namespace skelid {

// Relative weights of the per-stream losses and (optionally) the fused-head
// loss in a joint training objective.
struct LossWeights {
    double w_str = 0.0;
    double w_ttr = 0.0;
    double w_fusion = 0.0;
};

// Joint training with a shared objective: both streams count equally, no
// fused head in the loss.
inline LossWeights shared_loss_weights() { return LossWeights{0.5, 0.5, 0.0}; }

// Joint training through the fusion head: the fused prediction carries the
// largest share.
inline LossWeights fusion_loss_weights() { return LossWeights{0.3, 0.3, 0.4}; }

// w_str * loss_str + w_ttr * loss_ttr, evaluated left to right.
inline Val combine_stream_losses(Tape& t, Val loss_str, Val loss_ttr, const LossWeights& w) {
    return add(t, scale(t, loss_str, w.w_str), scale(t, loss_ttr, w.w_ttr));
}

// w_str * loss_str + w_ttr * loss_ttr + w_fusion * loss_fused, left to right.
inline Val combine_fusion_losses(Tape& t, Val loss_str, Val loss_ttr, Val loss_fused,
                                 const LossWeights& w) {
    return add(t, combine_stream_losses(t, loss_str, loss_ttr, w),
               scale(t, loss_fused, w.w_fusion));
}

// L2-normalize each stream's embedding row-wise, then concatenate with the
// spatial stream first. Every output row has norm sqrt(2) (up to the
// normalizer's epsilon), so neither stream can drown out the other by sheer
// magnitude.
inline Val fuse_embeddings(Tape& t, Val embedding_str, Val embedding_ttr) {
    const Tensor& a = t.value(embedding_str);
    const Tensor& b = t.value(embedding_ttr);
    if (a.ndim() != 2 || b.ndim() != 2)
        throw ShapeError("fuse_embeddings expects [batch, dim] inputs, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
    return concat_last(t, l2_normalize(t, embedding_str), l2_normalize(t, embedding_ttr));
}

struct FusionHeadConfig {
    std::int64_t input_dim = 512;  // two concatenated 256-wide embeddings
    std::int64_t hidden1 = 512;
    std::int64_t hidden2 = 256;
    std::int64_t num_classes = 0;
    double dropout_p = 0.2;

    void validate() const {
        if (input_dim < 1 || hidden1 < 1 || hidden2 < 1)
            throw ValidationError("fusion head widths must be positive");
        if (num_classes < 2) throw ValidationError("fusion head needs at least 2 classes");
        if (!(dropout_p >= 0.0 && dropout_p < 1.0))
            throw ValidationError("dropout probability must lie in [0, 1)");
    }
};

// Classifier over the fused embedding: linear -> batch norm -> relu ->
// dropout, twice, then a near-zero-initialized linear layer to class logits.
// Dropout draws from keys derived off the caller-provided key, so a fixed key
// reproduces the exact same masks; evaluation (training=false) is
// deterministic and key-independent.
class FusionHeadParams {
  public:
    FusionHeadParams(const std::string& name, const FusionHeadConfig& config, std::uint64_t seed)
        : cfg_(validated(config)),
          fc1_(name + ".fc1", config.hidden1, config.input_dim, seed),
          bn1_(name + ".bn1", config.hidden1),
          fc2_(name + ".fc2", config.hidden2, config.hidden1, seed),
          bn2_(name + ".bn2", config.hidden2),
          fc3_(name + ".fc3", config.num_classes, config.hidden2, seed, 0.01) {}

    const FusionHeadConfig& config() const { return cfg_; }

    Val forward(Tape& t, Val fused, bool training, std::uint64_t dropout_key) {
        const Tensor& xv = t.value(fused);
        if (xv.ndim() != 2 || xv.dim(1) != cfg_.input_dim)
            throw ShapeError("fusion head expects [batch, " + std::to_string(cfg_.input_dim) +
                             "], got " + shape_str(xv.shape()));
        Val h = relu(t, bn1_.forward(t, fc1_.forward(t, fused), training));
        h = dropout(t, h, cfg_.dropout_p, training, derive_key({dropout_key, 1}));
        h = relu(t, bn2_.forward(t, fc2_.forward(t, h), training));
        h = dropout(t, h, cfg_.dropout_p, training, derive_key({dropout_key, 2}));
        return fc3_.forward(t, h);
    }

    void collect(std::vector<Parameter*>& params) {
        fc1_.collect(params);
        bn1_.collect(params);
        fc2_.collect(params);
        bn2_.collect(params);
        fc3_.collect(params);
    }
    void collect_state(StateDict& state) {
        fc1_.collect_state(state);
        bn1_.collect_state(state);
        fc2_.collect_state(state);
        bn2_.collect_state(state);
        fc3_.collect_state(state);
    }

  private:
    static const FusionHeadConfig& validated(const FusionHeadConfig& c) {
        c.validate();
        return c;
    }

    FusionHeadConfig cfg_;
    LinearParams fc1_;
    BatchNormParams bn1_;
    LinearParams fc2_;
    BatchNormParams bn2_;
    LinearParams fc3_;
};

}  // namespace skelid
