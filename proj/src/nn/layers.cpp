#include "ftriage/nn/layers.hpp"

#include "ftriage/common/error.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>

namespace ftriage::nn {

namespace {

template <typename Real>
using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Uniform in [0,1) from the top 53 bits; platform independent unlike
// std::uniform_real_distribution.
double unit_uniform(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <typename Real>
BasicTensor<Real> kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
    BasicTensor<Real> t(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : t.values()) v = static_cast<Real>((2.0 * unit_uniform(rng) - 1.0) * bound);
    return t;
}

void require_rank4(const Shape& shape, const std::string& layer) {
    if (shape.size() != 4) throw ConfigError("layer '" + layer + "' expects [B,C,H,W], got " + shape_str(shape));
}

template <typename Real>
void check_finite(const BasicTensor<Real>& t, const std::string& layer) {
    if (!t.all_finite()) throw NumericError("layer '" + layer + "' produced non-finite values");
}

} // namespace

template <typename Real>
std::vector<const Param<Real>*> Layer<Real>::params() const {
    auto mutable_params = const_cast<Layer*>(this)->params();
    return {mutable_params.begin(), mutable_params.end()};
}

// ---------------------------------------------------------------- conv2d

template <typename Real>
Conv2dLayer<Real>::Conv2dLayer(LayerSpec spec, std::size_t in_channels, Rng& rng)
    : Layer<Real>(std::move(spec)) {
    const auto& s = this->spec_;
    const std::size_t fan_in = in_channels * s.kernel * s.kernel;
    weight_ = Param<Real>(s.name + ".weight",
                          kaiming_uniform<Real>({s.out_channels, in_channels, s.kernel, s.kernel}, fan_in, rng));
    bias_ = Param<Real>(s.name + ".bias", BasicTensor<Real>({s.out_channels}));
}

template <typename Real>
Shape Conv2dLayer<Real>::output_shape(const Shape& input) const {
    require_rank4(input, this->name());
    if (input[1] != weight_.value.dim(1)) {
        throw ConfigError("conv2d '" + this->name() + "' expects " + std::to_string(weight_.value.dim(1)) +
                          " input channels, got " + std::to_string(input[1]));
    }
    const auto& s = this->spec_;
    return {input[0], s.out_channels, window_output_extent(input[2], s.kernel, s.stride, s.padding),
            window_output_extent(input[3], s.kernel, s.stride, s.padding)};
}

template <typename Real>
BasicTensor<Real> Conv2dLayer<Real>::forward(const BasicTensor<Real>& input, Mode, Rng&) {
    auto result = conv2d_forward(input, weight_.value, bias_.value, this->spec_.stride, this->spec_.padding);
    cache_ = std::move(result.cache);
    return std::move(result.output);
}

template <typename Real>
BasicTensor<Real> Conv2dLayer<Real>::backward(const BasicTensor<Real>& grad_out) {
    auto grads = conv2d_backward(cache_, grad_out);
    weight_.grad = std::move(grads.weights);
    bias_.grad = std::move(grads.bias);
    return std::move(grads.input);
}

template <typename Real>
BasicTensor<Real> Conv2dLayer<Real>::infer(const BasicTensor<Real>& input) const {
    return conv2d_infer(input, weight_.value, bias_.value, this->spec_.stride, this->spec_.padding);
}

// ---------------------------------------------------------------- batchnorm

template <typename Real>
BatchNormLayer<Real>::BatchNormLayer(LayerSpec spec, std::size_t channels)
    : Layer<Real>(std::move(spec)),
      gamma_(this->spec_.name + ".gamma", BasicTensor<Real>({channels}, Real(1))),
      beta_(this->spec_.name + ".beta", BasicTensor<Real>({channels})),
      running_mean_({channels}),
      running_var_({channels}, Real(1)) {}

template <typename Real>
BasicTensor<Real> BatchNormLayer<Real>::normalize_with(const BasicTensor<Real>& input, const std::vector<Real>& mean,
                                                       const std::vector<Real>& inv_std) const {
    const std::size_t batch = input.dim(0);
    const std::size_t channels = input.dim(1);
    if (channels != gamma_.value.numel()) {
        throw ConfigError("batchnorm '" + this->name() + "' expects " + std::to_string(gamma_.value.numel()) +
                          " channels, got " + std::to_string(channels));
    }
    const std::size_t spatial = input.numel() / (batch * channels);
    BasicTensor<Real> x_hat(input.shape());
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t off = (b * channels + c) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) x_hat[off + i] = (input[off + i] - mean[c]) * inv_std[c];
        }
    }
    return x_hat;
}

template <typename Real>
BasicTensor<Real> BatchNormLayer<Real>::forward(const BasicTensor<Real>& input, Mode mode, Rng&) {
    if (input.rank() < 2) throw ConfigError("batchnorm '" + this->name() + "' expects [B,C,...]");
    const std::size_t batch = input.dim(0);
    const std::size_t channels = input.dim(1);
    const std::size_t spatial = input.numel() / (batch * channels);
    std::vector<Real> mean(channels);
    inv_std_.assign(channels, Real(0));
    batch_stats_used_ = mode == Mode::train && track_stats_;
    if (batch_stats_used_) {
        const double count = static_cast<double>(batch * spatial);
        for (std::size_t c = 0; c < channels; ++c) {
            double sum = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                const std::size_t off = (b * channels + c) * spatial;
                for (std::size_t i = 0; i < spatial; ++i) sum += input[off + i];
            }
            const double mu = sum / count;
            double sq = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                const std::size_t off = (b * channels + c) * spatial;
                for (std::size_t i = 0; i < spatial; ++i) {
                    const double d = input[off + i] - mu;
                    sq += d * d;
                }
            }
            const double var = sq / count;
            mean[c] = static_cast<Real>(mu);
            inv_std_[c] = static_cast<Real>(1.0 / std::sqrt(var + kBatchNormEpsilon));
            const double unbiased = count > 1.0 ? var * count / (count - 1.0) : var;
            running_mean_[c] = static_cast<Real>((1.0 - kBatchNormMomentum) * running_mean_[c] + kBatchNormMomentum * mu);
            running_var_[c] =
                static_cast<Real>((1.0 - kBatchNormMomentum) * running_var_[c] + kBatchNormMomentum * unbiased);
        }
    } else {
        for (std::size_t c = 0; c < channels; ++c) {
            mean[c] = running_mean_[c];
            inv_std_[c] = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(running_var_[c]) + kBatchNormEpsilon));
        }
    }
    x_hat_ = normalize_with(input, mean, inv_std_);
    BasicTensor<Real> out(input.shape());
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t off = (b * channels + c) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) out[off + i] = gamma_.value[c] * x_hat_[off + i] + beta_.value[c];
        }
    }
    check_finite(out, this->name());
    return out;
}

template <typename Real>
BasicTensor<Real> BatchNormLayer<Real>::backward(const BasicTensor<Real>& grad_out) {
    if (x_hat_.empty()) throw UsageError("batchnorm '" + this->name() + "' backward without forward");
    if (grad_out.shape() != x_hat_.shape()) throw UsageError("batchnorm '" + this->name() + "' grad shape mismatch");
    const std::size_t batch = grad_out.dim(0);
    const std::size_t channels = grad_out.dim(1);
    const std::size_t spatial = grad_out.numel() / (batch * channels);
    const double count = static_cast<double>(batch * spatial);
    gamma_.grad = BasicTensor<Real>({channels});
    beta_.grad = BasicTensor<Real>({channels});
    BasicTensor<Real> grad_in(grad_out.shape());
    for (std::size_t c = 0; c < channels; ++c) {
        double sum_dy = 0.0;
        double sum_dy_xhat = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t off = (b * channels + c) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) {
                sum_dy += grad_out[off + i];
                sum_dy_xhat += static_cast<double>(grad_out[off + i]) * x_hat_[off + i];
            }
        }
        gamma_.grad[c] = static_cast<Real>(sum_dy_xhat);
        beta_.grad[c] = static_cast<Real>(sum_dy);
        const double scale = static_cast<double>(gamma_.value[c]) * inv_std_[c];
        for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t off = (b * channels + c) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) {
                if (batch_stats_used_) {
                    grad_in[off + i] = static_cast<Real>(
                        scale / count * (count * grad_out[off + i] - sum_dy - x_hat_[off + i] * sum_dy_xhat));
                } else {
                    grad_in[off + i] = static_cast<Real>(scale * grad_out[off + i]);
                }
            }
        }
    }
    return grad_in;
}

template <typename Real>
BasicTensor<Real> BatchNormLayer<Real>::infer(const BasicTensor<Real>& input) const {
    const std::size_t channels = input.dim(1);
    std::vector<Real> mean(channels), inv_std(channels);
    for (std::size_t c = 0; c < std::min(channels, running_mean_.numel()); ++c) {
        mean[c] = running_mean_[c];
        inv_std[c] = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(running_var_[c]) + kBatchNormEpsilon));
    }
    auto out = normalize_with(input, mean, inv_std);
    const std::size_t batch = input.dim(0);
    const std::size_t spatial = input.numel() / (batch * channels);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t off = (b * channels + c) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) out[off + i] = gamma_.value[c] * out[off + i] + beta_.value[c];
        }
    }
    check_finite(out, this->name());
    return out;
}

// ---------------------------------------------------------------- relu

template <typename Real>
BasicTensor<Real> ReluLayer<Real>::forward(const BasicTensor<Real>& input, Mode, Rng&) {
    input_ = input;
    return infer(input);
}

template <typename Real>
BasicTensor<Real> ReluLayer<Real>::backward(const BasicTensor<Real>& grad_out) {
    if (grad_out.shape() != input_.shape()) throw UsageError("relu '" + this->name() + "' grad shape mismatch");
    BasicTensor<Real> grad_in(grad_out.shape());
    for (std::size_t i = 0; i < grad_in.numel(); ++i) grad_in[i] = input_[i] > Real(0) ? grad_out[i] : Real(0);
    return grad_in;
}

template <typename Real>
BasicTensor<Real> ReluLayer<Real>::infer(const BasicTensor<Real>& input) const {
    BasicTensor<Real> out(input.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = input[i] > Real(0) ? input[i] : Real(0);
    return out;
}

// ---------------------------------------------------------------- maxpool

template <typename Real>
Shape MaxPoolLayer<Real>::output_shape(const Shape& input) const {
    require_rank4(input, this->name());
    const auto& s = this->spec_;
    return {input[0], input[1], window_output_extent(input[2], s.kernel, s.stride, s.padding),
            window_output_extent(input[3], s.kernel, s.stride, s.padding)};
}

template <typename Real>
BasicTensor<Real> MaxPoolLayer<Real>::pool(const BasicTensor<Real>& input, std::vector<std::size_t>* argmax) const {
    const Shape out_shape = output_shape(input.shape());
    const auto& s = this->spec_;
    const std::size_t height = input.dim(2), width = input.dim(3);
    BasicTensor<Real> out(out_shape);
    if (argmax) argmax->assign(out.numel(), 0);
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < out_shape[0] * out_shape[1]; ++plane) {
        const std::size_t base = plane * height * width;
        for (std::size_t oy = 0; oy < out_shape[2]; ++oy) {
            for (std::size_t ox = 0; ox < out_shape[3]; ++ox, ++o) {
                Real best = -std::numeric_limits<Real>::infinity();
                std::size_t best_idx = base;
                bool found = false;
                for (std::size_t ky = 0; ky < s.kernel; ++ky) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * s.stride + ky) - static_cast<std::ptrdiff_t>(s.padding);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
                    for (std::size_t kx = 0; kx < s.kernel; ++kx) {
                        const auto ix =
                            static_cast<std::ptrdiff_t>(ox * s.stride + kx) - static_cast<std::ptrdiff_t>(s.padding);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width)) continue;
                        const std::size_t idx = base + static_cast<std::size_t>(iy) * width + static_cast<std::size_t>(ix);
                        if (!found || input[idx] > best) {  // strict: first maximum wins ties
                            best = input[idx];
                            best_idx = idx;
                            found = true;
                        }
                    }
                }
                out[o] = best;
                if (argmax) (*argmax)[o] = best_idx;
            }
        }
    }
    return out;
}

template <typename Real>
BasicTensor<Real> MaxPoolLayer<Real>::forward(const BasicTensor<Real>& input, Mode, Rng&) {
    input_shape_ = input.shape();
    return pool(input, &argmax_);
}

template <typename Real>
BasicTensor<Real> MaxPoolLayer<Real>::backward(const BasicTensor<Real>& grad_out) {
    if (grad_out.numel() != argmax_.size()) throw UsageError("maxpool '" + this->name() + "' grad shape mismatch");
    BasicTensor<Real> grad_in(input_shape_);
    for (std::size_t o = 0; o < argmax_.size(); ++o) grad_in[argmax_[o]] += grad_out[o];
    return grad_in;
}

template <typename Real>
BasicTensor<Real> MaxPoolLayer<Real>::infer(const BasicTensor<Real>& input) const {
    return pool(input, nullptr);
}

// ---------------------------------------------------------------- dense

template <typename Real>
DenseLayer<Real>::DenseLayer(LayerSpec spec, std::size_t in_features, Rng& rng) : Layer<Real>(std::move(spec)) {
    const auto& s = this->spec_;
    weight_ = Param<Real>(s.name + ".weight", kaiming_uniform<Real>({s.out_dim, in_features}, in_features, rng));
    bias_ = Param<Real>(s.name + ".bias", BasicTensor<Real>({s.out_dim}));
}

template <typename Real>
Shape DenseLayer<Real>::output_shape(const Shape& input) const {
    if (input.empty() || shape_numel(input) / input[0] != weight_.value.dim(1)) {
        throw ConfigError("dense '" + this->name() + "' expects " + std::to_string(weight_.value.dim(1)) +
                          " features per item, got input " + shape_str(input));
    }
    return {input[0], weight_.value.dim(0)};
}

template <typename Real>
BasicTensor<Real> DenseLayer<Real>::forward(const BasicTensor<Real>& input, Mode, Rng&) {
    input_ = input;
    return infer(input);
}

template <typename Real>
BasicTensor<Real> DenseLayer<Real>::infer(const BasicTensor<Real>& input) const {
    const Shape out_shape = output_shape(input.shape());
    const std::size_t batch = out_shape[0], out_dim = out_shape[1], in_dim = weight_.value.dim(1);
    BasicTensor<Real> out(out_shape);
    Eigen::Map<const RowMatrix<Real>> x(input.data(), batch, in_dim);
    Eigen::Map<const RowMatrix<Real>> w(weight_.value.data(), out_dim, in_dim);
    Eigen::Map<RowMatrix<Real>> y(out.data(), batch, out_dim);
    y.noalias() = x * w.transpose();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < out_dim; ++j) y(b, j) += bias_.value[j];
    }
    check_finite(out, this->name());
    return out;
}

template <typename Real>
BasicTensor<Real> DenseLayer<Real>::backward(const BasicTensor<Real>& grad_out) {
    if (input_.empty()) throw UsageError("dense '" + this->name() + "' backward without forward");
    const std::size_t batch = input_.dim(0), out_dim = weight_.value.dim(0), in_dim = weight_.value.dim(1);
    if (grad_out.shape() != Shape{batch, out_dim}) throw UsageError("dense '" + this->name() + "' grad shape mismatch");
    Eigen::Map<const RowMatrix<Real>> x(input_.data(), batch, in_dim);
    Eigen::Map<const RowMatrix<Real>> w(weight_.value.data(), out_dim, in_dim);
    Eigen::Map<const RowMatrix<Real>> dy(grad_out.data(), batch, out_dim);
    weight_.grad = BasicTensor<Real>(weight_.value.shape());
    Eigen::Map<RowMatrix<Real>> dw(weight_.grad.data(), out_dim, in_dim);
    dw.noalias() = dy.transpose() * x;
    bias_.grad = BasicTensor<Real>({out_dim});
    for (std::size_t j = 0; j < out_dim; ++j) bias_.grad[j] = dy.col(j).sum();
    BasicTensor<Real> grad_in(input_.shape());
    Eigen::Map<RowMatrix<Real>> dx(grad_in.data(), batch, in_dim);
    dx.noalias() = dy * w;
    return grad_in;
}

// ---------------------------------------------------------------- dropout

template <typename Real>
BasicTensor<Real> DropoutLayer<Real>::forward(const BasicTensor<Real>& input, Mode mode, Rng& rng) {
    const double p = this->spec_.dropout;
    if (mode == Mode::eval || p == 0.0) {
        scale_.clear();
        return input;
    }
    const Real keep_scale = static_cast<Real>(1.0 / (1.0 - p));
    scale_.resize(input.numel());
    BasicTensor<Real> out(input.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        scale_[i] = unit_uniform(rng) < p ? Real(0) : keep_scale;
        out[i] = input[i] * scale_[i];
    }
    return out;
}

template <typename Real>
BasicTensor<Real> DropoutLayer<Real>::backward(const BasicTensor<Real>& grad_out) {
    if (scale_.empty()) return grad_out;
    if (scale_.size() != grad_out.numel()) throw UsageError("dropout '" + this->name() + "' grad shape mismatch");
    BasicTensor<Real> grad_in(grad_out.shape());
    for (std::size_t i = 0; i < grad_in.numel(); ++i) grad_in[i] = grad_out[i] * scale_[i];
    return grad_in;
}

// ---------------------------------------------------------------- global average pool

template <typename Real>
Shape GlobalAvgPoolLayer<Real>::output_shape(const Shape& input) const {
    require_rank4(input, this->name());
    return {input[0], input[1]};
}

template <typename Real>
BasicTensor<Real> GlobalAvgPoolLayer<Real>::forward(const BasicTensor<Real>& input, Mode, Rng&) {
    input_shape_ = input.shape();
    return infer(input);
}

template <typename Real>
BasicTensor<Real> GlobalAvgPoolLayer<Real>::infer(const BasicTensor<Real>& input) const {
    const Shape out_shape = output_shape(input.shape());
    const std::size_t area = input.dim(2) * input.dim(3);
    BasicTensor<Real> out(out_shape);
    for (std::size_t plane = 0; plane < out.numel(); ++plane) {
        double sum = 0.0;
        for (std::size_t i = 0; i < area; ++i) sum += input[plane * area + i];
        out[plane] = static_cast<Real>(sum / static_cast<double>(area));
    }
    return out;
}

template <typename Real>
BasicTensor<Real> GlobalAvgPoolLayer<Real>::backward(const BasicTensor<Real>& grad_out) {
    if (input_shape_.empty()) throw UsageError("global-avg-pool '" + this->name() + "' backward without forward");
    const std::size_t area = input_shape_[2] * input_shape_[3];
    BasicTensor<Real> grad_in(input_shape_);
    const Real inv = static_cast<Real>(1.0 / static_cast<double>(area));
    for (std::size_t plane = 0; plane < grad_out.numel(); ++plane) {
        for (std::size_t i = 0; i < area; ++i) grad_in[plane * area + i] = grad_out[plane] * inv;
    }
    return grad_in;
}

// ---------------------------------------------------------------- factory

template <typename Real>
std::unique_ptr<Layer<Real>> make_layer(const LayerSpec& spec, const Shape& item_shape, Rng& rng) {
    spec.validate();
    switch (spec.kind) {
    case LayerKind::conv2d:
        if (item_shape.size() != 3) throw ConfigError("conv2d '" + spec.name + "' needs a spatial input");
        return std::make_unique<Conv2dLayer<Real>>(spec, item_shape[0], rng);
    case LayerKind::batchnorm:
        return std::make_unique<BatchNormLayer<Real>>(spec, item_shape.at(0));
    case LayerKind::relu:
        return std::make_unique<ReluLayer<Real>>(spec);
    case LayerKind::maxpool:
        return std::make_unique<MaxPoolLayer<Real>>(spec);
    case LayerKind::dense:
        return std::make_unique<DenseLayer<Real>>(spec, shape_numel(item_shape), rng);
    case LayerKind::dropout:
        return std::make_unique<DropoutLayer<Real>>(spec);
    case LayerKind::global_avg_pool:
        return std::make_unique<GlobalAvgPoolLayer<Real>>(spec);
    case LayerKind::softmax_output:
        return std::make_unique<SoftmaxOutputLayer<Real>>(spec);
    }
    throw ConfigError("unknown layer kind for '" + spec.name + "'");
}

#define FTRIAGE_INSTANTIATE_LAYERS(Real)                                                          \
    template class Layer<Real>;                                                                   \
    template class Conv2dLayer<Real>;                                                             \
    template class BatchNormLayer<Real>;                                                          \
    template class ReluLayer<Real>;                                                               \
    template class MaxPoolLayer<Real>;                                                            \
    template class DenseLayer<Real>;                                                              \
    template class DropoutLayer<Real>;                                                            \
    template class GlobalAvgPoolLayer<Real>;                                                      \
    template std::unique_ptr<Layer<Real>> make_layer<Real>(const LayerSpec&, const Shape&, Rng&);

FTRIAGE_INSTANTIATE_LAYERS(float)
FTRIAGE_INSTANTIATE_LAYERS(double)

} // namespace ftriage::nn
