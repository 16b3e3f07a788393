#pragma once

#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "skelid/tensor.hpp"

namespace skelid {

// Trainable tensor with an accumulated gradient. Gradients add up across
// backward calls until zero_grad(), which is what lets several losses (or a
// repeated backward) contribute to one optimizer step.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(Tensor(value.shape())) {}

    void zero_grad() { grad.fill(0.0); }
};

class Tape;

// Handle to a node on the tape. Cheap to copy; only valid for the tape that
// created it and until that tape is cleared.
struct Val {
    std::int32_t id = -1;
};

// Backward rule: receives the tape and the node's own handle, reads the
// node's gradient, and accumulates into the gradients of its inputs.
using BackFn = std::function<void(Tape&, Val)>;

// Reverse-mode tape. Operations push one node each, recording a closure that
// scatters the node's output gradient back to its inputs. backward() walks
// nodes newest-to-oldest, which is a valid topological order because inputs
// always precede their consumers on the tape.
class Tape {
  public:
    Val leaf(Tensor value) { return push_node(std::move(value), nullptr, nullptr); }

    Val param(Parameter& p) { return push_node(p.value, nullptr, &p); }

    Val push(Tensor value, BackFn back) { return push_node(std::move(value), std::move(back), nullptr); }

    Tensor& value(Val v) { return node(v).value; }
    const Tensor& value(Val v) const { return node(v).value; }

    Tensor& grad(Val v) { return node(v).grad; }
    const Tensor& grad(Val v) const { return node(v).grad; }

    std::size_t size() const { return nodes_.size(); }

    void clear() { nodes_.clear(); }

    // Seeds d(loss)/d(loss) = 1 and propagates to every node, then adds each
    // parameter leaf's node gradient into Parameter::grad.
    void backward(Val loss) {
        Node& top = node(loss);
        if (top.value.numel() != 1)
            throw ValidationError("backward requires a scalar loss, got shape " + shape_str(top.value.shape()));
        for (auto& n : nodes_) n.grad.fill(0.0);
        top.grad.fill(1.0);
        for (std::size_t i = nodes_.size(); i > 0; --i) {
            Node& n = nodes_[i - 1];
            Val self{static_cast<std::int32_t>(i - 1)};
            if (n.back) n.back(*this, self);
            if (n.param) n.param->grad.add_(n.grad);
        }
    }

  private:
    struct Node {
        Tensor value;
        Tensor grad;
        BackFn back;
        Parameter* param;
    };

    Val push_node(Tensor value, BackFn back, Parameter* p) {
        Node n{std::move(value), Tensor(), std::move(back), p};
        n.grad = Tensor(n.value.shape());
        nodes_.push_back(std::move(n));
        return Val{static_cast<std::int32_t>(nodes_.size() - 1)};
    }

    Node& node(Val v) {
        if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
            throw ValidationError("invalid tape handle " + std::to_string(v.id));
        return nodes_[static_cast<std::size_t>(v.id)];
    }
    const Node& node(Val v) const { return const_cast<Tape*>(this)->node(v); }

    // Deque, not vector: push_back never invalidates existing node references,
    // so Tensor& handles from value()/grad() stay valid while a graph grows.
    std::deque<Node> nodes_;
};

}  // namespace skelid
