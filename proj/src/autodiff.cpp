#include "drfn/autodiff.hpp"

#include <stdexcept>

namespace drfn {

Var Tape::constant(Tensor value)
{
    nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
    return Var{this, nodes_.size() - 1};
}

Var Tape::variable(Tensor value)
{
    nodes_.push_back(Node{std::move(value), {}, {}, nullptr, true});
    return Var{this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p)
{
    nodes_.push_back(Node{p.value, {}, {}, &p, true});
    return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardRule rule)
{
    Node node;
    node.value = std::move(value);
    for (const Var& v : inputs) {
        if (v.tape != this) throw std::invalid_argument("operation mixes values from different tapes");
        node.inputs.push_back(v.id);
        node.requires_grad = node.requires_grad || nodes_[v.id].requires_grad;
    }
    if (node.requires_grad) node.rule = std::move(rule);
    nodes_.push_back(std::move(node));
    return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad_of(Var v)
{
    Tensor& g = grads_.at(v.id);
    if (g.empty()) g = Tensor::zeros(nodes_[v.id].value.shape());
    return g;
}

Tensor Tape::grad(Var v) const
{
    if (v.id < grads_.size() && !grads_[v.id].empty()) return grads_[v.id];
    return Tensor::zeros(nodes_.at(v.id).value.shape());
}

void Tape::backward(Var loss)
{
    if (loss.tape != this) throw std::invalid_argument("backward: loss belongs to a different tape");
    if (nodes_.at(loss.id).value.size() != 1)
        throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                    shape_str(nodes_[loss.id].value.shape()));
    grads_.assign(nodes_.size(), Tensor{});
    grad_of(loss).fill(1.0);

    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (!node.requires_grad || grads_[i].empty()) continue;
        if (node.rule) node.rule(*this, grads_[i]);
        if (node.param != nullptr) node.param->grad += grads_[i];
    }
}

}  // namespace drfn
