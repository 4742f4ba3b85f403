#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace ftriage::nn {

using Shape = std::vector<std::size_t>;

// 64-byte aligned storage. Eigen picks its vectorized code path from pointer
// alignment, so without this the rounding of a product could depend on where
// the heap happened to place a buffer.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlignment{64};

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array. The element type is a template parameter so the
/// engine can run in float for experiments and in double for gradient checks.
template <typename Real>
class BasicTensor {
public:
    using value_type = Real;

    BasicTensor() = default;
    explicit BasicTensor(Shape shape, Real fill = Real(0));
    BasicTensor(Shape shape, std::vector<Real> data);
    BasicTensor(Shape shape, AlignedVector<Real> data);

    static BasicTensor from(Shape shape, std::initializer_list<Real> values) {
        return BasicTensor(std::move(shape), std::vector<Real>(values));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t numel() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    Real* data() noexcept { return data_.data(); }
    const Real* data() const noexcept { return data_.data(); }
    std::span<Real> values() noexcept { return data_; }
    std::span<const Real> values() const noexcept { return data_; }

    Real& operator[](std::size_t i) { return data_[i]; }
    const Real& operator[](std::size_t i) const { return data_[i]; }

    // 4-D NCHW accessor; no bounds checks beyond the debug assert.
    Real& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
    const Real& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;

    /// Same data, new shape with equal element count.
    BasicTensor reshaped(Shape shape) const&;
    BasicTensor reshaped(Shape shape) &&;

    void fill(Real v);
    bool all_finite() const noexcept;

    bool operator==(const BasicTensor& other) const = default;

private:
    Shape shape_;
    AlignedVector<Real> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Converts between precisions (used by tests that mirror float networks in double).
template <typename To, typename From>
BasicTensor<To> tensor_cast(const BasicTensor<From>& src) {
    std::vector<To> out(src.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<To>(src[i]);
    return BasicTensor<To>(src.shape(), std::move(out));
}

} // namespace ftriage::nn
