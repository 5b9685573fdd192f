#include "derain/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace derain {

std::string Shape::str() const {
    std::ostringstream os;
    os << '(' << n << ", " << c << ", " << h << ", " << w << ')';
    return os.str();
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
    if (a != b) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.str() + " vs " +
                                    b.str());
    }
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(shape) {
    if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
        throw std::invalid_argument("Tensor: negative extent in " + shape.str());
    }
    data_.assign(static_cast<std::size_t>(shape.numel()), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : shape_(shape), data_(values.begin(), values.end()) {
    if (static_cast<std::int64_t>(data_.size()) != shape.numel()) {
        throw std::invalid_argument("Tensor: " + std::to_string(data_.size()) +
                                    " values do not fill shape " + shape.str());
    }
}

template <typename T>
void Tensor<T>::fill(T value) {
    std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
Tensor<T> Tensor<T>::slice_channels(std::int64_t begin, std::int64_t end) const {
    if (begin < 0 || end > shape_.c || begin > end) {
        throw std::invalid_argument("slice_channels: range out of bounds for " + shape_.str());
    }
    Tensor out({shape_.n, end - begin, shape_.h, shape_.w});
    const std::int64_t plane = shape_.plane();
    for (std::int64_t n = 0; n < shape_.n; ++n) {
        const T* src = ptr() + offset(n, begin, 0, 0);
        std::copy(src, src + (end - begin) * plane, out.ptr() + out.offset(n, 0, 0, 0));
    }
    return out;
}

template <typename T>
Tensor<T> Tensor<T>::slice_batch(std::int64_t begin, std::int64_t end) const {
    if (begin < 0 || end > shape_.n || begin > end) {
        throw std::invalid_argument("slice_batch: range out of bounds for " + shape_.str());
    }
    const std::int64_t item = shape_.c * shape_.plane();
    std::vector<T> values(ptr() + begin * item, ptr() + end * item);
    return Tensor({end - begin, shape_.c, shape_.h, shape_.w}, std::move(values));
}

template <typename T>
Tensor<T> Tensor<T>::crop(std::int64_t top, std::int64_t left, std::int64_t h,
                          std::int64_t w) const {
    if (top < 0 || left < 0 || h < 0 || w < 0 || top + h > shape_.h || left + w > shape_.w) {
        throw std::invalid_argument("crop: window exceeds " + shape_.str());
    }
    Tensor out({shape_.n, shape_.c, h, w});
    for (std::int64_t n = 0; n < shape_.n; ++n)
        for (std::int64_t c = 0; c < shape_.c; ++c)
            for (std::int64_t y = 0; y < h; ++y) {
                const T* src = ptr() + offset(n, c, top + y, left);
                std::copy(src, src + w, out.ptr() + out.offset(n, c, y, 0));
            }
    return out;
}

template <typename T>
Tensor<T> stack_batch(std::span<const Tensor<T>> items) {
    if (items.empty()) throw std::invalid_argument("stack_batch: no tensors");
    Shape s = items.front().shape();
    std::vector<T> values;
    values.reserve(static_cast<std::size_t>(s.numel()) * items.size());
    std::int64_t total = 0;
    for (const auto& t : items) {
        const Shape& ts = t.shape();
        if (ts.c != s.c || ts.h != s.h || ts.w != s.w) {
            throw std::invalid_argument("stack_batch: shape mismatch " + s.str() + " vs " +
                                        ts.str());
        }
        values.insert(values.end(), t.data().begin(), t.data().end());
        total += ts.n;
    }
    s.n = total;
    return Tensor<T>(s, std::move(values));
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "max_abs_diff");
    double worst = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    }
    return worst;
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
    return std::all_of(t.data().begin(), t.data().end(),
                       [](T v) { return std::isfinite(v); });
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> stack_batch(std::span<const Tensor<float>>);
template Tensor<double> stack_batch(std::span<const Tensor<double>>);
template double max_abs_diff(const Tensor<float>&, const Tensor<float>&);
template double max_abs_diff(const Tensor<double>&, const Tensor<double>&);
template bool all_finite(const Tensor<float>&);
template bool all_finite(const Tensor<double>&);

}  // namespace derain
