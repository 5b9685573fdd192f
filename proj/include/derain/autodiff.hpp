#pragma once

#include <cstddef>
#include <functional>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "derain/params.hpp"
#include "derain/tensor.hpp"

namespace derain {

enum class OpKind {
    Leaf,
    Param,
    Conv2d,
    AvgPool,
    MaxPool,
    Upsample,
    Concat,
    LeakyRelu,
    Add,
    Sub,
    Scale,
    Mean,
    L1Loss,
};

std::string_view op_name(OpKind kind);

template <typename T>
class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <typename T>
struct Var {
    Tape<T>* tape = nullptr;
    std::size_t id = 0;

    [[nodiscard]] const Tensor<T>& value() const;
    [[nodiscard]] const Shape& shape() const { return value().shape(); }
    [[nodiscard]] bool valid() const { return tape != nullptr; }
};

/// Append-only record of a forward computation. backward() walks the nodes once in
/// reverse creation order, so every node's inputs precede it.
template <typename T>
class Tape {
public:
    /// Propagates the gradient of node `self` into its inputs.
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Input that never receives a gradient.
    Var<T> constant(Tensor<T> value);
    /// Input whose gradient is kept on the tape (read back with grad()).
    Var<T> input(Tensor<T> value);
    /// Learnable leaf referencing `p.value` without copying. Registering the same parameter
    /// twice returns the same node.
    Var<T> param(const Parameter<T>& p);

    Var<T> record(OpKind kind, Tensor<T> value, std::vector<std::size_t> inputs,
                  BackwardFn backward);

    [[nodiscard]] const Tensor<T>& value(std::size_t id) const;
    [[nodiscard]] bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    [[nodiscard]] OpKind kind(std::size_t id) const { return nodes_[id].kind; }
    [[nodiscard]] const std::vector<std::size_t>& inputs(std::size_t id) const {
        return nodes_[id].inputs;
    }
    [[nodiscard]] std::size_t size() const { return nodes_.size(); }

    /// Gradient accumulated at `id`; empty if the loss did not reach it.
    [[nodiscard]] const Tensor<T>& grad(std::size_t id) const { return nodes_[id].grad; }
    [[nodiscard]] const Tensor<T>& grad(Var<T> v) const { return grad(v.id); }
    /// Mutable gradient buffer of `id`, zero-allocated on first use.
    Tensor<T>& grad_buffer(std::size_t id);

    /// Node id registered for `p`, or -1.
    [[nodiscard]] std::ptrdiff_t find_param(const Parameter<T>& p) const;

    /// Reverse pass from a scalar (single-element) node.
    void backward(Var<T> loss);

private:
    struct Node {
        OpKind kind = OpKind::Leaf;
        std::vector<std::size_t> inputs;
        Tensor<T> value;
        const Tensor<T>* external = nullptr;
        Tensor<T> grad;
        bool requires_grad = false;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    std::unordered_map<const Parameter<T>*, std::size_t> param_nodes_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
    return tape->value(id);
}

}  // namespace derain
