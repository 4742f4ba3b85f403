#pragma once

#include "ftriage/nn/param.hpp"

#include <span>

namespace ftriage::nn {

struct AdamHyper {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const;
};

/// One bias-corrected Adam update at step t (1-based). Elements of masked-out
/// channels keep their value and both moment estimates untouched.
template <typename Real>
void adam_step(std::span<Param<Real>* const> params, const AdamHyper& hyper, std::size_t t);

} // namespace ftriage::nn
