#pragma once

#include "ftriage/nn/tensor.hpp"

namespace ftriage::nn {

/// Output extent of a convolution or pooling window: floor((n + 2p - k)/s) + 1.
/// Throws ConfigError when the window does not fit.
std::size_t window_output_extent(std::size_t n, std::size_t kernel, std::size_t stride, std::size_t padding);

template <typename Real>
struct Conv2dCache {
    BasicTensor<Real> input;    // [B,C,H,W]
    BasicTensor<Real> weights;  // [F,C,k,k]
    std::size_t stride = 1;
    std::size_t padding = 0;

    bool valid() const { return !input.empty() && !weights.empty(); }
};

template <typename Real>
struct Conv2dResult {
    BasicTensor<Real> output;  // [B,F,H',W']
    Conv2dCache<Real> cache;
};

template <typename Real>
struct Conv2dGrads {
    BasicTensor<Real> input;
    BasicTensor<Real> weights;
    BasicTensor<Real> bias;
};

// Cross-correlation (no kernel flip) with zero padding, lowered to
// im2col + GEMM per batch item.
template <typename Real>
Conv2dResult<Real> conv2d_forward(const BasicTensor<Real>& input, const BasicTensor<Real>& weights,
                                  const BasicTensor<Real>& bias, std::size_t stride, std::size_t padding);

/// Forward without retaining a cache.
template <typename Real>
BasicTensor<Real> conv2d_infer(const BasicTensor<Real>& input, const BasicTensor<Real>& weights,
                               const BasicTensor<Real>& bias, std::size_t stride, std::size_t padding);

template <typename Real>
Conv2dGrads<Real> conv2d_backward(const Conv2dCache<Real>& cache, const BasicTensor<Real>& grad_out);

} // namespace ftriage::nn
