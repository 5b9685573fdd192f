#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "derain/tensor.hpp"

namespace derain {

template <typename T>
class Tape;

/// A learnable tensor together with its gradient and ADAM moments.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    Tensor<T> m;  // first moment
    Tensor<T> v;  // second moment
};

/// Named learnable tensors, iterated in insertion order. Parameter addresses are stable.
template <typename T>
class ParamStore {
public:
    ParamStore() = default;
    ParamStore(const ParamStore& other);
    ParamStore& operator=(const ParamStore& other);
    ParamStore(ParamStore&&) noexcept = default;
    ParamStore& operator=(ParamStore&&) noexcept = default;

    Parameter<T>& add(std::string name, Tensor<T> init);

    [[nodiscard]] bool contains(const std::string& name) const;
    [[nodiscard]] Parameter<T>& get(const std::string& name);
    [[nodiscard]] const Parameter<T>& get(const std::string& name) const;

    [[nodiscard]] std::size_t size() const { return params_.size(); }
    [[nodiscard]] std::int64_t element_count() const;

    Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
    const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    void zero_grad();
    /// Copies gradients recorded on `tape` into each parameter's grad; parameters the tape
    /// never touched, or that the loss did not reach, receive zeros.
    void collect_grads(const Tape<T>& tape);

    template <typename U>
    [[nodiscard]] ParamStore<U> cast() const {
        ParamStore<U> out;
        for (const auto& p : params_) out.add(p->name, p->value.template cast<U>());
        return out;
    }

private:
    std::vector<std::unique_ptr<Parameter<T>>> params_;
    std::map<std::string, std::size_t> index_;
};

}  // namespace derain
