#pragma once

#include "ftriage/nn/layers.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ftriage::nn {

/// Sequential stack of layers built from an ArchitectureSpec. Copying a
/// network deep-copies every layer, parameter, moment and buffer.
template <typename Real>
class BasicNetwork {
public:
    BasicNetwork() = default;
    BasicNetwork(ArchitectureSpec arch, std::uint64_t seed);

    BasicNetwork(const BasicNetwork& other);
    BasicNetwork& operator=(const BasicNetwork& other);
    BasicNetwork(BasicNetwork&&) noexcept = default;
    BasicNetwork& operator=(BasicNetwork&&) noexcept = default;

    const ArchitectureSpec& architecture() const noexcept { return arch_; }
    std::size_t size() const noexcept { return layers_.size(); }
    Layer<Real>& layer(std::size_t i) { return *layers_.at(i); }
    const Layer<Real>& layer(std::size_t i) const { return *layers_.at(i); }

    std::optional<std::size_t> find(const std::string& name) const;
    /// Like find() but throws UsageError for unknown names.
    std::size_t index_of(const std::string& name) const;

    /// Input shape with batch dimension, e.g. {B,3,32,32}.
    Shape batch_input_shape(std::size_t batch) const;

    BasicTensor<Real> forward(const BasicTensor<Real>& input, Mode mode, Rng& rng);
    BasicTensor<Real> backward(const BasicTensor<Real>& grad_logits);

    /// Evaluation-mode forward that touches no state.
    BasicTensor<Real> infer(const BasicTensor<Real>& input) const;
    /// Evaluation-mode forward stopping after layer `last` (inclusive).
    BasicTensor<Real> infer_through(const BasicTensor<Real>& input, std::size_t last) const;

    std::vector<Param<Real>*> params();
    std::vector<const Param<Real>*> params() const;
    std::vector<NamedBuffer<Real>> buffers();

    void zero_grad();
    void init_moments();
    void clear_masks();

    std::vector<std::string> conv_layer_names() const;
    std::size_t parameter_count() const;
    std::size_t trainable_parameter_count() const;

private:
    ArchitectureSpec arch_;
    std::vector<std::unique_ptr<Layer<Real>>> layers_;
};

using Network = BasicNetwork<float>;
using NetworkD = BasicNetwork<double>;

} // namespace ftriage::nn
