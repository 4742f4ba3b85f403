#pragma once

#include "ftriage/nn/network.hpp"

namespace ftriage::zoo {

inline constexpr const char* kCifar10Small = "cifar10-small";
inline constexpr const char* kAllConvBn = "allconv-bn";

/// conv3x3/32 -> BN -> ReLU -> pool2 -> conv3x3/16 -> BN -> ReLU -> pool2
/// -> fc128 -> ReLU -> dropout 0.5 -> fc(classes) -> softmax
nn::ArchitectureSpec cifar10_small(std::size_t num_classes);

/// All-CNN-C with batch norm after every convolution. The last 1x1 conv
/// produces class scores directly, so no ReLU follows it.
nn::ArchitectureSpec allconv_bn(std::size_t num_classes);

/// Looks a preset up by name; num_classes must be 10 or 100.
nn::ArchitectureSpec preset_architecture(const std::string& name, std::size_t num_classes);

nn::Network build_model(const nn::ArchitectureSpec& arch, std::uint64_t seed);

/// Name of the ReLU that directly follows conv `conv_name` (skipping its batch
/// norm), or empty when there is none.
std::string post_relu_of(const nn::Network& network, const std::string& conv_name);

} // namespace ftriage::zoo
