#pragma once

#include "asvlab/neural/graph.hpp"
#include "asvlab/rng.hpp"

namespace asvlab::nn {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam on every trainable parameter; increments the
/// store's step counter.
void adam_step(ParamStore& store, const AdamConfig& cfg);

/// Global L2 norm of trainable gradients.
double grad_norm(ParamStore& store);
/// Rescales trainable gradients so their global norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(ParamStore& store, double max_norm);

/// Kaiming-uniform fan-in init: U(-b, b) with b = gain * sqrt(3 / fan_in).
/// gain = sqrt(2) is the ReLU variant.
void kaiming_uniform(Parameter& p, std::size_t fan_in, Rng& rng, double gain = 1.0);

}  // namespace asvlab::nn
