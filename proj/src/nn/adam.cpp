#include "ftriage/nn/adam.hpp"

#include "ftriage/common/error.hpp"

#include <cmath>

namespace ftriage::nn {

void AdamHyper::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("adam learning_rate must be > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("adam beta1 must lie in (0,1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("adam beta2 must lie in (0,1)");
    if (!(epsilon > 0.0)) throw ConfigError("adam epsilon must be > 0");
}

template <typename Real>
void adam_step(std::span<Param<Real>* const> params, const AdamHyper& hyper, std::size_t t) {
    if (t < 1) throw UsageError("adam step index must be >= 1");
    const double correction1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(t));
    const double correction2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(t));
    for (Param<Real>* p : params) {
        if (!p->moments_ready()) throw UsageError("adam moments of '" + p->name + "' are not initialized");
        if (p->grad.shape() != p->value.shape()) throw UsageError("gradient of '" + p->name + "' is not populated");
        const std::size_t block = p->channel_block();
        for (std::size_t c = 0; c < p->channels(); ++c) {
            if (!p->channel_trainable(c)) continue;
            for (std::size_t i = c * block; i < (c + 1) * block; ++i) {
                const double g = p->grad[i];
                const double m = hyper.beta1 * p->adam_m[i] + (1.0 - hyper.beta1) * g;
                const double v = hyper.beta2 * p->adam_v[i] + (1.0 - hyper.beta2) * g * g;
                p->adam_m[i] = static_cast<Real>(m);
                p->adam_v[i] = static_cast<Real>(v);
                const double step = hyper.learning_rate * (m / correction1) / (std::sqrt(v / correction2) + hyper.epsilon);
                p->value[i] = static_cast<Real>(p->value[i] - step);
            }
        }
        if (!p->value.all_finite()) throw NumericError("adam produced non-finite values in '" + p->name + "'");
    }
}

template void adam_step(std::span<Param<float>* const>, const AdamHyper&, std::size_t);
template void adam_step(std::span<Param<double>* const>, const AdamHyper&, std::size_t);

} // namespace ftriage::nn
