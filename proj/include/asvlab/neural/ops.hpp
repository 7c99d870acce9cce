// Differentiable ops recorded on a Graph.
#pragma once

#include "asvlab/neural/conv.hpp"
#include "asvlab/neural/graph.hpp"

namespace asvlab::nn {

/// x (B, in), weight (out, in), bias (out) -> (B, out).
Var linear(Graph& g, Var x, Var weight, Var bias);
Var relu(Graph& g, Var x);
Var sigmoid(Graph& g, Var x);
Var tanh(Graph& g, Var x);

/// x (B, Cin, L) -> (B, Cout, L_out); weight (Cout, Cin, K), bias (Cout).
Var conv1d(Graph& g, Var x, Var weight, Var bias, const Conv1dSpec& spec);
/// Transposed convolution, the adjoint of conv1d with the same padding mode.
/// y (B, Cin_t, L_in) -> (B, Cout_t, L_out) with weight (Cin_t, Cout_t, K),
/// bias (Cout_t). `spec` describes the transposed layer (in = Cin_t).
/// With circular padding this is CPTC-1D.
Var conv_transpose1d(Graph& g, Var y, Var weight, Var bias, const Conv1dSpec& spec);

/// Same data, new shape (element count must match).
Var reshape(Graph& g, Var x, Shape shape);
/// Columns [begin, begin + count) of a (B, F) tensor.
Var slice_columns(Graph& g, Var x, std::size_t begin, std::size_t count);
/// (B, Fa) ++ (B, Fb) -> (B, Fa + Fb).
Var concat_columns(Graph& g, Var a, Var b);

/// Elementwise a + b (same shape).
Var add(Graph& g, Var a, Var b);
/// Scalar sum_i x_i * w_i with constant weights.
Var weighted_sum(Graph& g, Var x, const Tensor& weights);

/// z = mu + exp(0.5 logvar) * noise, noise drawn by the caller.
Var reparameterize(Graph& g, Var mu, Var logvar, const Tensor& noise);

inline constexpr double kBceEpsilon = 1e-7;

struct ElboTerms {
    double bce = 0.0;    // per-sample sum over features, mean over batch
    double kl = 0.0;     // per-sample sum over latents, mean over batch
    double total = 0.0;  // bce + beta * kl
};

/// Scalar negative ELBO. `target` is treated as constant. When beta == 0 the
/// KL branch is not evaluated and total == bce exactly.
Var elbo_loss(Graph& g, Var target, Var reconstruction, Var mu, Var logvar, double beta,
              ElboTerms* terms = nullptr);

/// Per-sample KL(N(mu, sigma^2) || N(0, I)) terms, (B, D) in, (B, D) out.
Tensor kl_per_dimension(const Tensor& mu, const Tensor& logvar);

/// Mean of squared error between a (B,1) or (B) prediction and constant targets.
Var mse(Graph& g, Var prediction, const Tensor& target);

struct PpoBatch {
    Tensor actions;          // (B, A)
    Tensor old_log_prob;     // (B)
    Tensor advantages;       // (B), already normalized if requested
    Tensor returns;          // (B)
};

struct PpoLossConfig {
    double clip_range = 0.2;
    double ent_coef = 0.01;
    double vf_coef = 0.5;
};

struct PpoLossTerms {
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;       // mean entropy of the policy
    double clip_fraction = 0.0;
    double approx_kl = 0.0;
    double total = 0.0;
};

/// Clipped-surrogate PPO objective for a diagonal Gaussian policy:
///   total = -mean(min(ratio A, clip(ratio, 1-e, 1+e) A))
///           + vf_coef * mean((R - V)^2) - ent_coef * mean(entropy)
/// mean (B, A), log_std (A), value (B, 1) or (B).
Var ppo_loss(Graph& g, Var mean, Var log_std, Var value, const PpoBatch& batch, const PpoLossConfig& cfg,
             PpoLossTerms* terms = nullptr);

/// log N(action; mean, exp(log_std)^2) summed over action dims.
double gaussian_log_prob(std::span<const double> action, std::span<const double> mean,
                         std::span<const double> log_std);

}  // namespace asvlab::nn
