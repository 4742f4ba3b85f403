#include "ftriage/nn/conv.hpp"

#include "ftriage/common/error.hpp"

#include <Eigen/Core>

#include <vector>

namespace ftriage::nn {

namespace {

template <typename Real>
using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using MatMap = Eigen::Map<RowMatrix<Real>>;
template <typename Real>
using ConstMatMap = Eigen::Map<const RowMatrix<Real>>;

struct Geometry {
    std::size_t batch, channels, height, width;
    std::size_t filters, kernel, stride, padding;
    std::size_t out_h, out_w;

    std::size_t patch() const { return channels * kernel * kernel; }
    std::size_t out_area() const { return out_h * out_w; }
};

template <typename Real>
Geometry check_geometry(const BasicTensor<Real>& input, const BasicTensor<Real>& weights,
                        std::size_t stride, std::size_t padding) {
    if (input.rank() != 4) throw ConfigError("conv2d input must be [B,C,H,W], got " + shape_str(input.shape()));
    if (weights.rank() != 4 || weights.dim(2) != weights.dim(3)) {
        throw ConfigError("conv2d weights must be [F,C,k,k], got " + shape_str(weights.shape()));
    }
    if (weights.dim(1) != input.dim(1)) {
        throw ConfigError("conv2d channel mismatch: input " + shape_str(input.shape()) + " vs weights " +
                          shape_str(weights.shape()));
    }
    if (stride == 0) throw ConfigError("conv2d stride must be >= 1");
    Geometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3),
               weights.dim(0), weights.dim(2), stride, padding, 0, 0};
    g.out_h = window_output_extent(g.height, g.kernel, stride, padding);
    g.out_w = window_output_extent(g.width, g.kernel, stride, padding);
    return g;
}

// cols is [C*k*k, out_h*out_w], row-major.
template <typename Real>
void im2col(const Real* image, const Geometry& g, Real* cols) {
    const std::size_t area = g.out_area();
    for (std::size_t c = 0; c < g.channels; ++c) {
        const Real* plane = image + c * g.height * g.width;
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                Real* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * area;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.padding);
                    Real* dst = row + oy * g.out_w;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
                        std::fill(dst, dst + g.out_w, Real(0));
                        continue;
                    }
                    const Real* src = plane + static_cast<std::size_t>(iy) * g.width;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                        static_cast<std::ptrdiff_t>(g.padding);
                        dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) ? Real(0) : src[ix];
                    }
                }
            }
        }
    }
}

template <typename Real>
void col2im_add(const Real* cols, const Geometry& g, Real* image) {
    const std::size_t area = g.out_area();
    for (std::size_t c = 0; c < g.channels; ++c) {
        Real* plane = image + c * g.height * g.width;
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                const Real* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * area;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.padding);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
                    Real* dst = plane + static_cast<std::size_t>(iy) * g.width;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                        static_cast<std::ptrdiff_t>(g.padding);
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) dst[ix] += row[oy * g.out_w + ox];
                    }
                }
            }
        }
    }
}

} // namespace

std::size_t window_output_extent(std::size_t n, std::size_t kernel, std::size_t stride, std::size_t padding) {
    if (kernel == 0 || stride == 0) throw ConfigError("window kernel and stride must be >= 1");
    if (n + 2 * padding < kernel) {
        throw ConfigError("window of size " + std::to_string(kernel) + " does not fit input extent " +
                          std::to_string(n) + " with padding " + std::to_string(padding));
    }
    return (n + 2 * padding - kernel) / stride + 1;
}

template <typename Real>
BasicTensor<Real> conv2d_infer(const BasicTensor<Real>& input, const BasicTensor<Real>& weights,
                               const BasicTensor<Real>& bias, std::size_t stride, std::size_t padding) {
    const Geometry g = check_geometry(input, weights, stride, padding);
    if (bias.numel() != g.filters) throw ConfigError("conv2d bias must have one entry per filter");
    BasicTensor<Real> out({g.batch, g.filters, g.out_h, g.out_w});
    AlignedVector<Real> cols(g.patch() * g.out_area());
    ConstMatMap<Real> w(weights.data(), g.filters, g.patch());
    ConstMatMap<Real> col_map(cols.data(), g.patch(), g.out_area());
    const std::size_t in_stride = g.channels * g.height * g.width;
    const std::size_t out_stride = g.filters * g.out_area();
    for (std::size_t b = 0; b < g.batch; ++b) {
        im2col(input.data() + b * in_stride, g, cols.data());
        MatMap<Real> y(out.data() + b * out_stride, g.filters, g.out_area());
        y.noalias() = w * col_map;
        for (std::size_t f = 0; f < g.filters; ++f) y.row(f).array() += bias[f];
    }
    if (!out.all_finite()) throw NumericError("conv2d produced non-finite output");
    return out;
}

template <typename Real>
Conv2dResult<Real> conv2d_forward(const BasicTensor<Real>& input, const BasicTensor<Real>& weights,
                                  const BasicTensor<Real>& bias, std::size_t stride, std::size_t padding) {
    Conv2dResult<Real> result;
    result.output = conv2d_infer(input, weights, bias, stride, padding);
    result.cache = Conv2dCache<Real>{input, weights, stride, padding};
    return result;
}

template <typename Real>
Conv2dGrads<Real> conv2d_backward(const Conv2dCache<Real>& cache, const BasicTensor<Real>& grad_out) {
    if (!cache.valid()) throw UsageError("conv2d_backward called without a forward cache");
    const Geometry g = check_geometry(cache.input, cache.weights, cache.stride, cache.padding);
    const Shape expected{g.batch, g.filters, g.out_h, g.out_w};
    if (grad_out.shape() != expected) {
        throw UsageError("conv2d_backward grad shape " + shape_str(grad_out.shape()) + " != forward output " +
                         shape_str(expected));
    }
    Conv2dGrads<Real> grads{BasicTensor<Real>(cache.input.shape()), BasicTensor<Real>(cache.weights.shape()),
                            BasicTensor<Real>({g.filters})};
    AlignedVector<Real> cols(g.patch() * g.out_area());
    AlignedVector<Real> dcols(g.patch() * g.out_area());
    ConstMatMap<Real> w(cache.weights.data(), g.filters, g.patch());
    MatMap<Real> dw(grads.weights.data(), g.filters, g.patch());
    MatMap<Real> col_map(cols.data(), g.patch(), g.out_area());
    MatMap<Real> dcol_map(dcols.data(), g.patch(), g.out_area());
    const std::size_t in_stride = g.channels * g.height * g.width;
    const std::size_t out_stride = g.filters * g.out_area();
    for (std::size_t b = 0; b < g.batch; ++b) {
        ConstMatMap<Real> dy(grad_out.data() + b * out_stride, g.filters, g.out_area());
        im2col(cache.input.data() + b * in_stride, g, cols.data());
        dw.noalias() += dy * col_map.transpose();
        for (std::size_t f = 0; f < g.filters; ++f) grads.bias[f] += dy.row(f).sum();
        dcol_map.noalias() = w.transpose() * dy;
        col2im_add(dcols.data(), g, grads.input.data() + b * in_stride);
    }
    return grads;
}

template Conv2dResult<float> conv2d_forward(const Tensor&, const Tensor&, const Tensor&, std::size_t, std::size_t);
template Conv2dResult<double> conv2d_forward(const TensorD&, const TensorD&, const TensorD&, std::size_t, std::size_t);
template Tensor conv2d_infer(const Tensor&, const Tensor&, const Tensor&, std::size_t, std::size_t);
template TensorD conv2d_infer(const TensorD&, const TensorD&, const TensorD&, std::size_t, std::size_t);
template Conv2dGrads<float> conv2d_backward(const Conv2dCache<float>&, const Tensor&);
template Conv2dGrads<double> conv2d_backward(const Conv2dCache<double>&, const TensorD&);

} // namespace ftriage::nn
