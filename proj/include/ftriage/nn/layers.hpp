#pragma once

#include "ftriage/nn/conv.hpp"
#include "ftriage/nn/layer_spec.hpp"
#include "ftriage/nn/param.hpp"

#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace ftriage::nn {

enum class Mode { train, eval };

using Rng = std::mt19937_64;

inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kBatchNormEpsilon = 1e-5;

template <typename Real>
struct NamedBuffer {
    std::string name;
    BasicTensor<Real>* tensor;
};

/// One stage of a sequential network. forward() retains whatever backward()
/// needs; infer() is the cache-free, state-free evaluation path.
/// backward() overwrites the gradients of the layer's own parameters.
template <typename Real>
class Layer {
public:
    explicit Layer(LayerSpec spec) : spec_(std::move(spec)) {}
    virtual ~Layer() = default;

    const LayerSpec& spec() const noexcept { return spec_; }
    const std::string& name() const noexcept { return spec_.name; }
    LayerKind kind() const noexcept { return spec_.kind; }

    virtual Shape output_shape(const Shape& input) const = 0;
    virtual BasicTensor<Real> forward(const BasicTensor<Real>& input, Mode mode, Rng& rng) = 0;
    virtual BasicTensor<Real> backward(const BasicTensor<Real>& grad_out) = 0;
    virtual BasicTensor<Real> infer(const BasicTensor<Real>& input) const = 0;

    virtual std::vector<Param<Real>*> params() { return {}; }
    virtual std::vector<NamedBuffer<Real>> buffers() { return {}; }
    virtual std::unique_ptr<Layer> clone() const = 0;

    std::vector<const Param<Real>*> params() const;

protected:
    LayerSpec spec_;
};

template <typename Real>
class Conv2dLayer final : public Layer<Real> {
public:
    Conv2dLayer(LayerSpec spec, std::size_t in_channels, Rng& rng);

    Shape output_shape(const Shape& input) const override;
    BasicTensor<Real> forward(const BasicTensor<Real>& input, Mode mode, Rng& rng) override;
    BasicTensor<Real> backward(const BasicTensor<Real>& grad_out) override;
    BasicTensor<Real> infer(const BasicTensor<Real>& input) const override;
    std::vector<Param<Real>*> params() override { return {&weight_, &bias_}; }
    std::unique_ptr<Layer<Real>> clone() const override { return std::make_unique<Conv2dLayer>(*this); }

    std::size_t filters() const { return weight_.value.dim(0); }
    Param<Real>& weight() { return weight_; }
    Param<Real>& bias() { return bias_; }

private:
    Param<Real> weight_;  // [F,C,k,k]
    Param<Real> bias_;    // [F]
    Conv2dCache<Real> cache_;
};

/// Per-channel batch normalization over batch and spatial axes.
/// When statistics tracking is disabled the layer normalizes with its running
/// statistics even in train mode and leaves them untouched.
template <typename Real>
class BatchNormLayer final : public Layer<Real> {
public:
    BatchNormLayer(LayerSpec spec, std::size_t channels);

    Shape output_shape(const Shape& input) const override { return input; }
    BasicTensor<Real> forward(const BasicTensor<Real>& input, Mode mode, Rng& rng) override;
    BasicTensor<Real> backward(const BasicTensor<Real>& grad_out) override;
    BasicTensor<Real> infer(const BasicTensor<Real>& input) const override;
    std::vector<Param<Real>*> params() override { return {&gamma_, &beta_}; }
    std::vector<NamedBuffer<Real>> buffers() override {
        return {{"running_mean", &running_mean_}, {"running_var", &running_var_}};
    }
    std::unique_ptr<Layer<Real>> clone() const override { return std::make_unique<BatchNormLayer>(*this); }

    void set_track_statistics(bool track) { track_stats_ = track; }
    bool track_statistics() const { return track_stats_; }
    const BasicTensor<Real>& running_mean() const { return running_mean_; }
    const BasicTensor<Real>& running_var() const { return running_var_; }

private:
    BasicTensor<Real> normalize_with(const BasicTensor<Real>& input, const std::vector<Real>& mean,
                                     const std::vector<Real>& inv_std) const;

    Param<Real> gamma_;
    Param<Real> beta_;
    BasicTensor<Real> running_mean_;
    BasicTensor<Real> running_var_;
    bool track_stats_ = true;

    // forward cache
    BasicTensor<Real> x_hat_;
    std::vector<Real> inv_std_;
    bool batch_stats_used_ = false;
};

template <typename Real>
class ReluLayer final : public Layer<Real> {
public:
    explicit ReluLayer(LayerSpec spec) : Layer<Real>(std::move(spec)) {}
    Shape output_shape(const Shape& input) const override { return input; }
    BasicTensor<Real> forward(const BasicTensor<Real>& input, Mode mode, Rng& rng) override;
    BasicTensor<Real> backward(const BasicTensor<Real>& grad_out) override;
    BasicTensor<Real> infer(const BasicTensor<Real>& input) const override;
    std::unique_ptr<Layer<Real>> clone() const override { return std::make_unique<ReluLayer>(*this); }

private:
    BasicTensor<Real> input_;
};

/// Max pooling; gradient goes to the first maximal element in row-major order.
template <typename Real>
class MaxPoolLayer final : public Layer<Real> {
public:
    explicit MaxPoolLayer(LayerSpec spec) : Layer<Real>(std::move(spec)) {}
    Shape output_shape(const Shape& input) const override;
    BasicTensor<Real> forward(const BasicTensor<Real>& input, Mode mode, Rng& rng) override;
    BasicTensor<Real> backward(const BasicTensor<Real>& grad_out) override;
    BasicTensor<Real> infer(const BasicTensor<Real>& input) const override;
    std::unique_ptr<Layer<Real>> clone() const override { return std::make_unique<MaxPoolLayer>(*this); }

private:
    BasicTensor<Real> pool(const BasicTensor<Real>& input, std::vector<std::size_t>* argmax) const;

    Shape input_shape_;
    std::vector<std::size_t> argmax_;
};

/// Fully connected layer; inputs of rank > 2 are flattened per batch item.
template <typename Real>
class DenseLayer final : public Layer<Real> {
public:
    DenseLayer(LayerSpec spec, std::size_t in_features, Rng& rng);
    Shape output_shape(const Shape& input) const override;
    BasicTensor<Real> forward(const BasicTensor<Real>& input, Mode mode, Rng& rng) override;
    BasicTensor<Real> backward(const BasicTensor<Real>& grad_out) override;
    BasicTensor<Real> infer(const BasicTensor<Real>& input) const override;
    std::vector<Param<Real>*> params() override { return {&weight_, &bias_}; }
    std::unique_ptr<Layer<Real>> clone() const override { return std::make_unique<DenseLayer>(*this); }

private:
    Param<Real> weight_;  // [out,in]
    Param<Real> bias_;    // [out]
    BasicTensor<Real> input_;
};

/// Inverted dropout: active only in train mode.
template <typename Real>
class DropoutLayer final : public Layer<Real> {
public:
    explicit DropoutLayer(LayerSpec spec) : Layer<Real>(std::move(spec)) {}
    Shape output_shape(const Shape& input) const override { return input; }
    BasicTensor<Real> forward(const BasicTensor<Real>& input, Mode mode, Rng& rng) override;
    BasicTensor<Real> backward(const BasicTensor<Real>& grad_out) override;
    BasicTensor<Real> infer(const BasicTensor<Real>& input) const override { return input; }
    std::unique_ptr<Layer<Real>> clone() const override { return std::make_unique<DropoutLayer>(*this); }

private:
    std::vector<Real> scale_;  // empty when the last forward was in eval mode
};

template <typename Real>
class GlobalAvgPoolLayer final : public Layer<Real> {
public:
    explicit GlobalAvgPoolLayer(LayerSpec spec) : Layer<Real>(std::move(spec)) {}
    Shape output_shape(const Shape& input) const override;
    BasicTensor<Real> forward(const BasicTensor<Real>& input, Mode mode, Rng& rng) override;
    BasicTensor<Real> backward(const BasicTensor<Real>& grad_out) override;
    BasicTensor<Real> infer(const BasicTensor<Real>& input) const override;
    std::unique_ptr<Layer<Real>> clone() const override { return std::make_unique<GlobalAvgPoolLayer>(*this); }

private:
    Shape input_shape_;
};

/// Marks the logits; the softmax itself lives in softmax_xent.
template <typename Real>
class SoftmaxOutputLayer final : public Layer<Real> {
public:
    explicit SoftmaxOutputLayer(LayerSpec spec) : Layer<Real>(std::move(spec)) {}
    Shape output_shape(const Shape& input) const override { return input; }
    BasicTensor<Real> forward(const BasicTensor<Real>& input, Mode, Rng&) override { return input; }
    BasicTensor<Real> backward(const BasicTensor<Real>& grad_out) override { return grad_out; }
    BasicTensor<Real> infer(const BasicTensor<Real>& input) const override { return input; }
    std::unique_ptr<Layer<Real>> clone() const override { return std::make_unique<SoftmaxOutputLayer>(*this); }
};

/// Instantiates a layer for the given per-item input shape ({C,H,W} or {D}).
template <typename Real>
std::unique_ptr<Layer<Real>> make_layer(const LayerSpec& spec, const Shape& item_shape, Rng& rng);

} // namespace ftriage::nn
