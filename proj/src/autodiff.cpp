#include "derain/autodiff.hpp"

#include <stdexcept>

namespace derain {

std::string_view op_name(OpKind kind) {
    switch (kind) {
        case OpKind::Leaf: return "leaf";
        case OpKind::Param: return "param";
        case OpKind::Conv2d: return "conv2d";
        case OpKind::AvgPool: return "avg_pool";
        case OpKind::MaxPool: return "max_pool";
        case OpKind::Upsample: return "upsample_nearest";
        case OpKind::Concat: return "concat_channels";
        case OpKind::LeakyRelu: return "leaky_relu";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Scale: return "scale";
        case OpKind::Mean: return "mean";
        case OpKind::L1Loss: return "l1_loss";
    }
    return "unknown";
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
    Node node;
    node.kind = OpKind::Leaf;
    node.value = std::move(value);
    nodes_.push_back(std::move(node));
    return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::input(Tensor<T> value) {
    Var<T> v = constant(std::move(value));
    nodes_.back().requires_grad = true;
    return v;
}

template <typename T>
Var<T> Tape<T>::param(const Parameter<T>& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
    Node node;
    node.kind = OpKind::Param;
    node.external = &p.value;
    node.requires_grad = true;
    nodes_.push_back(std::move(node));
    param_nodes_.emplace(&p, nodes_.size() - 1);
    return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::record(OpKind kind, Tensor<T> value, std::vector<std::size_t> inputs,
                       BackwardFn backward) {
    Node node;
    node.kind = kind;
    node.value = std::move(value);
    for (std::size_t in : inputs) {
        if (in >= nodes_.size()) throw std::invalid_argument("Tape::record: unknown input node");
        node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
    }
    node.inputs = std::move(inputs);
    if (node.requires_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return {this, nodes_.size() - 1};
}

template <typename T>
const Tensor<T>& Tape<T>::value(std::size_t id) const {
    const Node& node = nodes_.at(id);
    return node.external ? *node.external : node.value;
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(std::size_t id) {
    Node& node = nodes_[id];
    if (node.grad.empty() && value(id).numel() > 0) node.grad = Tensor<T>(value(id).shape());
    return node.grad;
}

template <typename T>
std::ptrdiff_t Tape<T>::find_param(const Parameter<T>& p) const {
    auto it = param_nodes_.find(&p);
    return it == param_nodes_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
    if (loss.tape != this) throw std::invalid_argument("backward: variable belongs to another tape");
    if (value(loss.id).numel() != 1) {
        throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                    value(loss.id).shape().str());
    }
    for (Node& node : nodes_) node.grad = Tensor<T>();
    grad_buffer(loss.id)[0] = T(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (!node.requires_grad || node.grad.empty() || !node.backward) continue;
        node.backward(*this, i);
    }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace derain
