#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "drfn/tensor.hpp"

namespace drfn {

// A learnable tensor. Optimizers skip parameters with trainable == false,
// but backward still accumulates their gradient.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string name_, Tensor v, bool trainable_ = true)
        : name(std::move(name_)), value(std::move(v)), grad(Tensor::zeros(value.shape())), trainable(trainable_)
    {}

    void zero_grad() { grad.fill(0.0); }
};

class Tape;

// Handle to a value recorded on a Tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

// Records operations in execution order. backward() replays the recorded
// rules in reverse, each exactly once, accumulating into input gradients and
// finally into the bound Parameters.
class Tape {
public:
    // grad_out is the gradient w.r.t. the node output; the rule adds into its
    // inputs through Tape::grad_of.
    using BackwardRule = std::function<void(Tape&, const Tensor& grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    Var variable(Tensor value);
    Var param(Parameter& p);

    Var record(Tensor value, std::vector<Var> inputs, BackwardRule rule);

    const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

    // Gradient buffer for v, allocated (zeroed) on first access. Only valid
    // during or after backward().
    Tensor& grad_of(Var v);
    // Gradient of v after backward(); zeros if nothing flowed into it.
    Tensor grad(Var v) const;

    // Seeds d(loss)/d(loss) = 1. loss must hold exactly one element.
    // Calling again re-runs the replay and accumulates into Parameters again.
    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        std::vector<std::size_t> inputs;
        BackwardRule rule;
        Parameter* param = nullptr;
        bool requires_grad = false;
    };

    // deque: references to recorded values stay valid while recording continues
    std::deque<Node> nodes_;
    std::vector<Tensor> grads_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

}  // namespace drfn
