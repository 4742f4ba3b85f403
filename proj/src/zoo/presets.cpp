#include "ftriage/zoo/presets.hpp"

#include "ftriage/common/error.hpp"

namespace ftriage::zoo {

using nn::LayerSpec;

namespace {

void check_classes(std::size_t num_classes) {
    if (num_classes != 10 && num_classes != 100) {
        throw ConfigError("preset architectures support 10 or 100 classes, got " + std::to_string(num_classes));
    }
}

} // namespace

nn::ArchitectureSpec cifar10_small(std::size_t num_classes) {
    check_classes(num_classes);
    nn::ArchitectureSpec arch;
    arch.name = kCifar10Small;
    arch.num_classes = num_classes;
    arch.input_shape = {3, 32, 32};
    arch.layers = {
        LayerSpec::conv(3, 32, 1, 1), LayerSpec::batchnorm(), LayerSpec::relu(), LayerSpec::maxpool(2),
        LayerSpec::conv(3, 16, 1, 1), LayerSpec::batchnorm(), LayerSpec::relu(), LayerSpec::maxpool(2),
        LayerSpec::dense(128),        LayerSpec::relu(),      LayerSpec::dropout_layer(0.5),
        LayerSpec::dense(num_classes), LayerSpec::softmax_output(),
    };
    return arch;
}

nn::ArchitectureSpec allconv_bn(std::size_t num_classes) {
    check_classes(num_classes);
    nn::ArchitectureSpec arch;
    arch.name = kAllConvBn;
    arch.num_classes = num_classes;
    arch.input_shape = {3, 32, 32};
    auto block = [&](LayerSpec conv, bool relu = true) {
        arch.layers.push_back(conv);
        arch.layers.push_back(LayerSpec::batchnorm());
        if (relu) arch.layers.push_back(LayerSpec::relu());
    };
    block(LayerSpec::conv(3, 96, 1, 1));
    block(LayerSpec::conv(3, 96, 1, 1));
    block(LayerSpec::conv(3, 96, 2, 1));
    block(LayerSpec::conv(3, 192, 1, 1));
    block(LayerSpec::conv(3, 192, 1, 1));
    block(LayerSpec::conv(3, 192, 2, 1));
    block(LayerSpec::conv(3, 192, 1, 0));
    block(LayerSpec::conv(1, 192));
    block(LayerSpec::conv(1, num_classes), false);
    arch.layers.push_back(LayerSpec::global_avg_pool());
    arch.layers.push_back(LayerSpec::softmax_output());
    return arch;
}

nn::ArchitectureSpec preset_architecture(const std::string& name, std::size_t num_classes) {
    if (name == kCifar10Small) return cifar10_small(num_classes);
    if (name == kAllConvBn) return allconv_bn(num_classes);
    throw ConfigError("unknown architecture '" + name + "' (expected cifar10-small or allconv-bn)");
}

nn::Network build_model(const nn::ArchitectureSpec& arch, std::uint64_t seed) { return nn::Network(arch, seed); }

std::string post_relu_of(const nn::Network& network, const std::string& conv_name) {
    const std::size_t i = network.index_of(conv_name);
    if (network.layer(i).kind() != nn::LayerKind::conv2d) throw UsageError("layer '" + conv_name + "' is not a conv");
    for (std::size_t j = i + 1; j < network.size(); ++j) {
        const auto kind = network.layer(j).kind();
        if (kind == nn::LayerKind::relu) return network.layer(j).name();
        if (kind != nn::LayerKind::batchnorm) break;
    }
    return {};
}

} // namespace ftriage::zoo
