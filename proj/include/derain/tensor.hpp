#pragma once

#include <cstddef>
#include <cstdint>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace derain {

/// Extent of a dense NCHW tensor.
struct Shape {
    std::int64_t n = 0;
    std::int64_t c = 0;
    std::int64_t h = 0;
    std::int64_t w = 0;

    [[nodiscard]] std::int64_t numel() const { return n * c * h * w; }
    [[nodiscard]] std::int64_t plane() const { return h * w; }
    [[nodiscard]] std::string str() const;

    friend bool operator==(const Shape&, const Shape&) = default;
};

/// Cache-line aligned storage. Vectorised reductions peel a prefix whose length depends on
/// the buffer address, so a fixed alignment keeps results identical from run to run.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), kAlign));
    }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <typename U>
    friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) {
        return true;
    }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Dense row-major [n, c, h, w] array. Value type: copies are deep.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0));
    Tensor(Shape shape, std::vector<T> values);

    [[nodiscard]] const Shape& shape() const { return shape_; }
    [[nodiscard]] std::int64_t numel() const { return shape_.numel(); }
    [[nodiscard]] bool empty() const { return data_.empty(); }

    [[nodiscard]] std::span<T> data() { return data_; }
    [[nodiscard]] std::span<const T> data() const { return data_; }
    [[nodiscard]] T* ptr() { return data_.data(); }
    [[nodiscard]] const T* ptr() const { return data_.data(); }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
        return data_[static_cast<std::size_t>(offset(n, c, h, w))];
    }
    const T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return data_[static_cast<std::size_t>(offset(n, c, h, w))];
    }

    [[nodiscard]] std::int64_t offset(std::int64_t n, std::int64_t c, std::int64_t h,
                                      std::int64_t w) const {
        return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }

    void fill(T value);

    template <typename U>
    [[nodiscard]] Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (std::size_t i = 0; i < data_.size(); ++i) out[static_cast<std::int64_t>(i)] = static_cast<U>(data_[i]);
        return out;
    }

    /// Channels [begin, end) of every batch item.
    [[nodiscard]] Tensor slice_channels(std::int64_t begin, std::int64_t end) const;
    /// Batch items [begin, end).
    [[nodiscard]] Tensor slice_batch(std::int64_t begin, std::int64_t end) const;
    /// Spatial window of size (h, w) starting at (top, left).
    [[nodiscard]] Tensor crop(std::int64_t top, std::int64_t left, std::int64_t h,
                              std::int64_t w) const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_{};
    AlignedVector<T> data_;
};

/// Stacks equally shaped tensors along the batch axis.
template <typename T>
Tensor<T> stack_batch(std::span<const Tensor<T>> items);

/// Largest |a - b| over all elements; shapes must match.
template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
bool all_finite(const Tensor<T>& t);

/// Throws std::invalid_argument naming both shapes when they differ.
void require_same_shape(const Shape& a, const Shape& b, const char* what);

}  // namespace derain
