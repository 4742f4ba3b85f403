#pragma once

#include "ftriage/nn/tensor.hpp"

#include <span>
#include <vector>

namespace ftriage::nn {

template <typename Real>
struct LossResult {
    double loss = 0.0;          // mean cross-entropy over the batch
    BasicTensor<Real> grad;     // d loss / d logits = (softmax - onehot) / B
    std::size_t correct = 0;    // argmax hits, ties resolved to the lowest class
};

/// Max-subtracted softmax cross-entropy. Throws InputError for labels outside [0,K).
template <typename Real>
LossResult<Real> softmax_xent(const BasicTensor<Real>& logits, std::span<const int> labels);

/// Row-wise argmax of [B,K] logits (first maximum wins).
template <typename Real>
std::vector<int> argmax_rows(const BasicTensor<Real>& logits);

} // namespace ftriage::nn
