#include "ftriage/nn/loss.hpp"

#include "ftriage/common/error.hpp"

#include <cmath>

namespace ftriage::nn {

template <typename Real>
std::vector<int> argmax_rows(const BasicTensor<Real>& logits) {
    if (logits.rank() != 2) throw UsageError("argmax_rows expects [B,K] logits, got " + shape_str(logits.shape()));
    const std::size_t batch = logits.dim(0), classes = logits.dim(1);
    std::vector<int> out(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < classes; ++k) {
            if (logits[b * classes + k] > logits[b * classes + best]) best = k;
        }
        out[b] = static_cast<int>(best);
    }
    return out;
}

template <typename Real>
LossResult<Real> softmax_xent(const BasicTensor<Real>& logits, std::span<const int> labels) {
    if (logits.rank() != 2) throw UsageError("softmax_xent expects [B,K] logits, got " + shape_str(logits.shape()));
    const std::size_t batch = logits.dim(0), classes = logits.dim(1);
    if (labels.size() != batch) throw InputError("softmax_xent: label count does not match batch size");
    LossResult<Real> result;
    result.grad = BasicTensor<Real>(logits.shape());
    const auto predictions = argmax_rows(logits);
    std::vector<double> probs(classes);
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const int label = labels[b];
        if (label < 0 || static_cast<std::size_t>(label) >= classes) {
            throw InputError("label " + std::to_string(label) + " outside [0," + std::to_string(classes) + ")");
        }
        const Real* row = logits.data() + b * classes;
        double max_logit = row[0];
        for (std::size_t k = 1; k < classes; ++k) max_logit = std::max(max_logit, static_cast<double>(row[k]));
        double denom = 0.0;
        for (std::size_t k = 0; k < classes; ++k) {
            probs[k] = std::exp(static_cast<double>(row[k]) - max_logit);
            denom += probs[k];
        }
        total += std::log(denom) - (static_cast<double>(row[label]) - max_logit);
        for (std::size_t k = 0; k < classes; ++k) {
            const double p = probs[k] / denom;
            result.grad[b * classes + k] =
                static_cast<Real>((p - (static_cast<std::size_t>(label) == k ? 1.0 : 0.0)) / static_cast<double>(batch));
        }
        if (predictions[b] == label) ++result.correct;
    }
    result.loss = total / static_cast<double>(batch);
    if (!std::isfinite(result.loss)) throw NumericError("softmax_xent produced a non-finite loss");
    return result;
}

template LossResult<float> softmax_xent(const Tensor&, std::span<const int>);
template LossResult<double> softmax_xent(const TensorD&, std::span<const int>);
template std::vector<int> argmax_rows(const Tensor&);
template std::vector<int> argmax_rows(const TensorD&);

} // namespace ftriage::nn
