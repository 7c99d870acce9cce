#include "asvlab/neural/optim.hpp"

#include <cmath>

namespace asvlab::nn {

void adam_step(ParamStore& store, const AdamConfig& cfg) {
    store.adam_steps += 1;
    const double t = static_cast<double>(store.adam_steps);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (Parameter* p : store.all()) {
        if (!p->trainable) {
            continue;
        }
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double g = p->grad[i];
            double& m = p->adam_m[i];
            double& v = p->adam_v[i];
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            const double m_hat = m / c1;
            const double v_hat = v / c2;
            p->value[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
    }
}

double grad_norm(ParamStore& store) {
    double sq = 0.0;
    for (Parameter* p : store.all()) {
        if (!p->trainable) {
            continue;
        }
        for (double g : p->grad.data) {
            sq += g * g;
        }
    }
    return std::sqrt(sq);
}

double clip_grad_norm(ParamStore& store, double max_norm) {
    const double norm = grad_norm(store);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / (norm + 1e-6);
        for (Parameter* p : store.all()) {
            if (!p->trainable) {
                continue;
            }
            for (double& g : p->grad.data) {
                g *= scale;
            }
        }
    }
    return norm;
}

void kaiming_uniform(Parameter& p, std::size_t fan_in, Rng& rng, double gain) {
    const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
    for (double& w : p.value.data) {
        w = rng.uniform(-bound, bound);
    }
}

}  // namespace asvlab::nn
