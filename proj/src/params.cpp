#include "derain/params.hpp"

#include <stdexcept>

#include "derain/autodiff.hpp"

namespace derain {

template <typename T>
ParamStore<T>::ParamStore(const ParamStore& other) {
    *this = other;
}

template <typename T>
ParamStore<T>& ParamStore<T>::operator=(const ParamStore& other) {
    if (this == &other) return *this;
    params_.clear();
    index_ = other.index_;
    for (const auto& p : other.params_) params_.push_back(std::make_unique<Parameter<T>>(*p));
    return *this;
}

template <typename T>
Parameter<T>& ParamStore<T>::add(std::string name, Tensor<T> init) {
    if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
    auto p = std::make_unique<Parameter<T>>();
    p->name = name;
    p->grad = Tensor<T>(init.shape());
    p->m = Tensor<T>(init.shape());
    p->v = Tensor<T>(init.shape());
    p->value = std::move(init);
    index_.emplace(std::move(name), params_.size());
    params_.push_back(std::move(p));
    return *params_.back();
}

template <typename T>
bool ParamStore<T>::contains(const std::string& name) const {
    return index_.count(name) != 0;
}

template <typename T>
Parameter<T>& ParamStore<T>::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParamStore: no parameter named " + name);
    return *params_[it->second];
}

template <typename T>
const Parameter<T>& ParamStore<T>::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParamStore: no parameter named " + name);
    return *params_[it->second];
}

template <typename T>
std::int64_t ParamStore<T>::element_count() const {
    std::int64_t total = 0;
    for (const auto& p : params_) total += p->value.numel();
    return total;
}

template <typename T>
void ParamStore<T>::zero_grad() {
    for (auto& p : params_) p->grad.fill(T(0));
}

template <typename T>
void ParamStore<T>::collect_grads(const Tape<T>& tape) {
    for (auto& p : params_) {
        const std::ptrdiff_t id = tape.find_param(*p);
        if (id < 0 || tape.grad(static_cast<std::size_t>(id)).empty()) {
            p->grad.fill(T(0));
        } else {
            p->grad = tape.grad(static_cast<std::size_t>(id));
        }
    }
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace derain
