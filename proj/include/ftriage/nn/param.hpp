#pragma once

#include "ftriage/nn/tensor.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ftriage::nn {

/// Output-channel trainability flags for one layer. A kernel element, bias
/// entry or batch-norm affine entry is trainable iff the flag of the output
/// channel it belongs to is set.
struct TrainabilityMask {
    std::string layer_id;
    std::vector<bool> channel_flags;

    std::size_t trainable_channels() const;
    static TrainabilityMask all(std::string layer_id, std::size_t channels, bool trainable);
};

/// A learnable tensor together with its gradient, Adam moments and optional
/// per-output-channel mask. The leading dimension of the value is the output
/// channel axis; every channel owns a contiguous block of numel()/F elements.
template <typename Real>
struct Param {
    std::string name;
    BasicTensor<Real> value;
    BasicTensor<Real> grad;
    BasicTensor<Real> adam_m;  // empty until init_moments()
    BasicTensor<Real> adam_v;
    std::optional<std::vector<bool>> channel_mask;

    Param() = default;
    Param(std::string name, BasicTensor<Real> initial);

    void zero_grad();
    void init_moments();
    bool moments_ready() const;

    std::size_t channels() const { return value.dim(0); }
    std::size_t channel_block() const { return value.numel() / value.dim(0); }

    /// Installs a channel mask; flags.size() must equal the leading dimension.
    void set_channel_mask(std::vector<bool> flags);
    void freeze_all() { set_channel_mask(std::vector<bool>(channels(), false)); }
    void clear_mask() { channel_mask.reset(); }

    bool channel_trainable(std::size_t channel) const {
        return !channel_mask || (*channel_mask)[channel];
    }
    std::size_t trainable_count() const;
};

} // namespace ftriage::nn
