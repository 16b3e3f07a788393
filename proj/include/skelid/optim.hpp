#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "skelid/autograd.hpp"

namespace skelid {

enum class OptimizerKind { adam, sgd_momentum };

inline const char* optimizer_kind_name(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd-momentum"; }

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 0.01;
    double weight_decay = 0.0;
    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Epoch-indexed learning-rate multiplier: tenfold drops at epochs 60 and 90.
inline double lr_schedule(std::int64_t epoch) {
    if (epoch >= 90) return 0.01;
    if (epoch >= 60) return 0.1;
    return 1.0;
}

// Adam / SGD-with-momentum over a fixed parameter list. Weight decay is
// added into the gradient (g += λθ) before the update for both kinds. Adam
// uses bias-corrected moment estimates.
class Optimizer {
  public:
    Optimizer(OptimizerConfig cfg, std::vector<Parameter*> params) : cfg_(cfg), params_(std::move(params)) {
        slot1_.reserve(params_.size());
        slot2_.reserve(params_.size());
        for (auto* p : params_) {
            slot1_.push_back(Tensor(p->value.shape()));
            slot2_.push_back(Tensor(p->value.shape()));
        }
    }

    const OptimizerConfig& config() const { return cfg_; }
    const std::vector<Parameter*>& params() const { return params_; }
    std::int64_t step_count() const { return step_count_; }

    void zero_grad() {
        for (auto* p : params_) p->zero_grad();
    }

    void step(double lr_multiplier = 1.0) {
        ++step_count_;
        const double lr = cfg_.learning_rate * lr_multiplier;
        if (cfg_.kind == OptimizerKind::adam) {
            const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
            const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
            for (std::size_t i = 0; i < params_.size(); ++i) {
                Parameter& p = *params_[i];
                Tensor& m = slot1_[i];
                Tensor& v = slot2_[i];
                for (std::int64_t j = 0; j < p.value.numel(); ++j) {
                    const double g = p.grad[j] + cfg_.weight_decay * p.value[j];
                    m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
                    v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
                    const double mhat = m[j] / bc1;
                    const double vhat = v[j] / bc2;
                    p.value[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
                }
            }
        } else {
            for (std::size_t i = 0; i < params_.size(); ++i) {
                Parameter& p = *params_[i];
                Tensor& buf = slot1_[i];
                for (std::int64_t j = 0; j < p.value.numel(); ++j) {
                    const double g = p.grad[j] + cfg_.weight_decay * p.value[j];
                    buf[j] = cfg_.momentum * buf[j] + g;
                    p.value[j] -= lr * buf[j];
                }
            }
        }
    }

    // Serialization hooks: buffers are named after their parameter so a
    // checkpoint can restore optimizer state positionally and by name.
    void collect_state(std::vector<std::pair<std::string, Tensor*>>& out) {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            const std::string& base = params_[i]->name;
            if (cfg_.kind == OptimizerKind::adam) {
                out.emplace_back(base + "#adam_m", &slot1_[i]);
                out.emplace_back(base + "#adam_v", &slot2_[i]);
            } else {
                out.emplace_back(base + "#momentum", &slot1_[i]);
            }
        }
    }

    void set_step_count(std::int64_t n) { step_count_ = n; }

  private:
    OptimizerConfig cfg_;
    std::vector<Parameter*> params_;
    std::vector<Tensor> slot1_;  // adam first moment / sgd momentum buffer
    std::vector<Tensor> slot2_;  // adam second moment (unused for sgd)
    std::int64_t step_count_ = 0;
};

}  // namespace skelid
