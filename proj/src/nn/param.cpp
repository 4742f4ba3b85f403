#include "ftriage/nn/param.hpp"

#include "ftriage/common/error.hpp"

#include <algorithm>

namespace ftriage::nn {

std::size_t TrainabilityMask::trainable_channels() const {
    return static_cast<std::size_t>(std::count(channel_flags.begin(), channel_flags.end(), true));
}

TrainabilityMask TrainabilityMask::all(std::string layer_id, std::size_t channels, bool trainable) {
    return {std::move(layer_id), std::vector<bool>(channels, trainable)};
}

template <typename Real>
Param<Real>::Param(std::string n, BasicTensor<Real> initial)
    : name(std::move(n)), value(std::move(initial)), grad(value.shape()) {
    if (value.rank() == 0 || value.dim(0) == 0) throw ConfigError("parameter '" + name + "' has no channels");
}

template <typename Real>
void Param<Real>::zero_grad() {
    grad.fill(Real(0));
}

template <typename Real>
void Param<Real>::init_moments() {
    adam_m = BasicTensor<Real>(value.shape());
    adam_v = BasicTensor<Real>(value.shape());
}

template <typename Real>
bool Param<Real>::moments_ready() const {
    return adam_m.shape() == value.shape() && adam_v.shape() == value.shape();
}

template <typename Real>
void Param<Real>::set_channel_mask(std::vector<bool> flags) {
    if (flags.size() != channels()) {
        throw ConfigError("mask for '" + name + "' has " + std::to_string(flags.size()) +
                          " channel flags, parameter has " + std::to_string(channels()) + " channels");
    }
    channel_mask = std::move(flags);
}

template <typename Real>
std::size_t Param<Real>::trainable_count() const {
    if (!channel_mask) return value.numel();
    return static_cast<std::size_t>(std::count(channel_mask->begin(), channel_mask->end(), true)) *
           channel_block();
}

template struct Param<float>;
template struct Param<double>;

} // namespace ftriage::nn
