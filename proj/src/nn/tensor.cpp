#include "ftriage/nn/tensor.hpp"

#include "ftriage/common/error.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <functional>
#include <numeric>

namespace ftriage::nn {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

template <typename Real>
BasicTensor<Real>::BasicTensor(Shape shape, Real fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

template <typename Real>
BasicTensor<Real>::BasicTensor(Shape shape, std::vector<Real> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (shape_numel(shape_) != data_.size()) {
        throw ConfigError("tensor shape " + shape_str(shape_) + " does not match " +
                          std::to_string(data_.size()) + " values");
    }
}

template <typename Real>
BasicTensor<Real>::BasicTensor(Shape shape, AlignedVector<Real> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
        throw ConfigError("tensor shape " + shape_str(shape_) + " does not match " +
                          std::to_string(data_.size()) + " values");
    }
}

template <typename Real>
Real& BasicTensor<Real>::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    assert(shape_.size() == 4);
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

template <typename Real>
const Real& BasicTensor<Real>::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    assert(shape_.size() == 4);
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

template <typename Real>
BasicTensor<Real> BasicTensor<Real>::reshaped(Shape shape) const& {
    return BasicTensor(std::move(shape), data_);
}

template <typename Real>
BasicTensor<Real> BasicTensor<Real>::reshaped(Shape shape) && {
    return BasicTensor(std::move(shape), std::move(data_));
}

template <typename Real>
void BasicTensor<Real>::fill(Real v) {
    std::fill(data_.begin(), data_.end(), v);
}

template <typename Real>
bool BasicTensor<Real>::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
}

template class BasicTensor<float>;
template class BasicTensor<double>;

} // namespace ftriage::nn
