#pragma once

#include "ftriage/nn/network.hpp"

namespace ftriage::susceptibility {

/// Where a conv layer's maps are read: after its ReLU (default) or after its
/// batch norm, before the ReLU.
enum class Capture { post_relu, pre_relu };

std::string to_string(Capture c);
Capture capture_from_string(const std::string& text);

/// Index of the layer whose output represents `conv_name` under `capture`.
/// Throws UsageError for unknown or non-conv layers.
std::size_t capture_index(const nn::Network& network, const std::string& conv_name, Capture capture);

/// Eval-mode maps of a preprocessed batch: [B,F,H,W].
nn::Tensor extract_activations(const nn::Network& network, const nn::Tensor& batch, const std::string& conv_name,
                               Capture capture = Capture::post_relu);

} // namespace ftriage::susceptibility
