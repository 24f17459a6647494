#include "drfn/train/adam.hpp"

#include <cmath>

namespace drfn {

void adam_step(AdamState& s, const std::vector<Parameter*>& params)
{
    for (const Parameter* p : params)
        if (p->trainable && !p->grad.all_finite()) throw NonFiniteGradient(p->name);

    ++s.t;
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
    for (Parameter* p : params) {
        if (!p->trainable) continue;
        auto [it, fresh] = s.moments.try_emplace(p->name);
        AdamMoments& mo = it->second;
        if (fresh || mo.m.shape() != p->value.shape()) {
            mo.m = Tensor::zeros(p->value.shape());
            mo.v = Tensor::zeros(p->value.shape());
        }
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double g = p->grad[i];
            mo.m[i] = s.beta1 * mo.m[i] + (1.0 - s.beta1) * g;
            mo.v[i] = s.beta2 * mo.v[i] + (1.0 - s.beta2) * g * g;
            p->value[i] -= s.lr * (mo.m[i] / c1) / (std::sqrt(mo.v[i] / c2) + s.epsilon);
        }
    }
}

}  // namespace drfn
