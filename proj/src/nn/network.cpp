#include "ftriage/nn/network.hpp"

#include "ftriage/common/error.hpp"

#include <map>

namespace ftriage::nn {

namespace {

std::string default_prefix(LayerKind kind) {
    switch (kind) {
    case LayerKind::conv2d: return "conv";
    case LayerKind::batchnorm: return "bn";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "pool";
    case LayerKind::dense: return "fc";
    case LayerKind::dropout: return "dropout";
    case LayerKind::global_avg_pool: return "gap";
    case LayerKind::softmax_output: return "softmax";
    }
    return "layer";
}

} // namespace

template <typename Real>
BasicNetwork<Real>::BasicNetwork(ArchitectureSpec arch, std::uint64_t seed) : arch_(std::move(arch)) {
    if (arch_.input_shape.size() != 3) {
        throw ConfigError("architecture '" + arch_.name + "' needs a {C,H,W} input shape");
    }
    std::map<LayerKind, std::size_t> counters;
    for (auto& spec : arch_.layers) {
        const std::size_t n = ++counters[spec.kind];
        if (spec.name.empty()) spec.name = default_prefix(spec.kind) + std::to_string(n);
    }
    Rng rng(seed);
    Shape shape = batch_input_shape(1);
    for (const auto& spec : arch_.layers) {
        if (find(spec.name)) throw ConfigError("duplicate layer name '" + spec.name + "'");
        const Shape item(shape.begin() + 1, shape.end());
        auto layer = make_layer<Real>(spec, item, rng);
        shape = layer->output_shape(shape);
        layers_.push_back(std::move(layer));
    }
    if (shape.size() != 2 || shape[1] != arch_.num_classes) {
        throw ConfigError("architecture '" + arch_.name + "' produces " + shape_str(shape) + ", expected [1," +
                          std::to_string(arch_.num_classes) + "] logits");
    }
}

template <typename Real>
BasicNetwork<Real>::BasicNetwork(const BasicNetwork& other) : arch_(other.arch_) {
    layers_.reserve(other.layers_.size());
    for (const auto& layer : other.layers_) layers_.push_back(layer->clone());
}

template <typename Real>
BasicNetwork<Real>& BasicNetwork<Real>::operator=(const BasicNetwork& other) {
    if (this != &other) {
        BasicNetwork copy(other);
        *this = std::move(copy);
    }
    return *this;
}

template <typename Real>
std::optional<std::size_t> BasicNetwork<Real>::find(const std::string& name) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i]->name() == name) return i;
    }
    return std::nullopt;
}

template <typename Real>
std::size_t BasicNetwork<Real>::index_of(const std::string& name) const {
    if (auto idx = find(name)) return *idx;
    throw UsageError("unknown layer '" + name + "' in architecture '" + arch_.name + "'");
}

template <typename Real>
Shape BasicNetwork<Real>::batch_input_shape(std::size_t batch) const {
    Shape shape{batch};
    shape.insert(shape.end(), arch_.input_shape.begin(), arch_.input_shape.end());
    return shape;
}

template <typename Real>
BasicTensor<Real> BasicNetwork<Real>::forward(const BasicTensor<Real>& input, Mode mode, Rng& rng) {
    BasicTensor<Real> x = input;
    for (auto& layer : layers_) x = layer->forward(x, mode, rng);
    return x;
}

template <typename Real>
BasicTensor<Real> BasicNetwork<Real>::backward(const BasicTensor<Real>& grad_logits) {
    BasicTensor<Real> g = grad_logits;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
}

template <typename Real>
BasicTensor<Real> BasicNetwork<Real>::infer(const BasicTensor<Real>& input) const {
    return layers_.empty() ? input : infer_through(input, layers_.size() - 1);
}

template <typename Real>
BasicTensor<Real> BasicNetwork<Real>::infer_through(const BasicTensor<Real>& input, std::size_t last) const {
    if (last >= layers_.size()) throw UsageError("layer index " + std::to_string(last) + " out of range");
    BasicTensor<Real> x = input;
    for (std::size_t i = 0; i <= last; ++i) x = layers_[i]->infer(x);
    return x;
}

template <typename Real>
std::vector<Param<Real>*> BasicNetwork<Real>::params() {
    std::vector<Param<Real>*> out;
    for (auto& layer : layers_) {
        for (auto* p : layer->params()) out.push_back(p);
    }
    return out;
}

template <typename Real>
std::vector<const Param<Real>*> BasicNetwork<Real>::params() const {
    std::vector<const Param<Real>*> out;
    for (const auto& layer : layers_) {
        for (const auto* p : std::as_const(*layer).params()) out.push_back(p);
    }
    return out;
}

template <typename Real>
std::vector<NamedBuffer<Real>> BasicNetwork<Real>::buffers() {
    std::vector<NamedBuffer<Real>> out;
    for (auto& layer : layers_) {
        for (auto buffer : layer->buffers()) {
            buffer.name = layer->name() + "." + buffer.name;
            out.push_back(buffer);
        }
    }
    return out;
}

template <typename Real>
void BasicNetwork<Real>::zero_grad() {
    for (auto* p : params()) p->zero_grad();
}

template <typename Real>
void BasicNetwork<Real>::init_moments() {
    for (auto* p : params()) p->init_moments();
}

template <typename Real>
void BasicNetwork<Real>::clear_masks() {
    for (auto* p : params()) p->clear_mask();
}

template <typename Real>
std::vector<std::string> BasicNetwork<Real>::conv_layer_names() const {
    std::vector<std::string> names;
    for (const auto& layer : layers_) {
        if (layer->kind() == LayerKind::conv2d) names.push_back(layer->name());
    }
    return names;
}

template <typename Real>
std::size_t BasicNetwork<Real>::parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : params()) n += p->value.numel();
    return n;
}

template <typename Real>
std::size_t BasicNetwork<Real>::trainable_parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : params()) n += p->trainable_count();
    return n;
}

template class BasicNetwork<float>;
template class BasicNetwork<double>;

} // namespace ftriage::nn
