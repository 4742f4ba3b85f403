#include "ftriage/susceptibility/activations.hpp"

#include "ftriage/common/error.hpp"

namespace ftriage::susceptibility {

std::string to_string(Capture c) { return c == Capture::post_relu ? "post-relu" : "pre-relu"; }

Capture capture_from_string(const std::string& text) {
    if (text == "post-relu") return Capture::post_relu;
    if (text == "pre-relu") return Capture::pre_relu;
    throw ConfigError("unknown activation capture '" + text + "' (expected post-relu or pre-relu)");
}

std::size_t capture_index(const nn::Network& network, const std::string& conv_name, Capture capture) {
    const auto found = network.find(conv_name);
    if (!found) throw UsageError("unknown layer '" + conv_name + "'");
    std::size_t idx = *found;
    if (network.layer(idx).kind() != nn::LayerKind::conv2d) {
        throw UsageError("layer '" + conv_name + "' is not convolutional");
    }
    if (idx + 1 < network.size() && network.layer(idx + 1).kind() == nn::LayerKind::batchnorm) ++idx;
    if (capture == Capture::post_relu && idx + 1 < network.size() &&
        network.layer(idx + 1).kind() == nn::LayerKind::relu) {
        ++idx;
    }
    return idx;
}

nn::Tensor extract_activations(const nn::Network& network, const nn::Tensor& batch, const std::string& conv_name,
                               Capture capture) {
    return network.infer_through(batch, capture_index(network, conv_name, capture));
}

} // namespace ftriage::susceptibility
