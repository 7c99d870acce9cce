#include "asvlab/neural/ops.hpp"

#include "asvlab/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace asvlab::nn {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape));
    }
}

void add_into(Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += src[i];
    }
}

template <typename F, typename DF>
Var elementwise(Graph& g, Var x, F f, DF df_from_xy) {
    const Tensor& xv = g.value(x);
    Tensor y(xv.shape);
    for (std::size_t i = 0; i < xv.size(); ++i) {
        y[i] = f(xv[i]);
    }
    return g.record(std::move(y), {x}, [x, df_from_xy](Graph& gr, Var self) {
        const Tensor& gy = gr.grad(self);
        const Tensor& xv2 = gr.value(x);
        const Tensor& yv = gr.value(self);
        Tensor& gx = gr.grad_buffer(x);
        for (std::size_t i = 0; i < gx.size(); ++i) {
            gx[i] += gy[i] * df_from_xy(xv2[i], yv[i]);
        }
    });
}

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Var linear(Graph& g, Var x, Var weight, Var bias) {
    const Tensor& xv = g.value(x);
    const Tensor& wv = g.value(weight);
    const Tensor& bv = g.value(bias);
    require_rank(xv, 2, "linear", "input");
    require_rank(wv, 2, "linear", "weight");
    const std::size_t batch = xv.dim(0);
    const std::size_t in = xv.dim(1);
    const std::size_t out = wv.dim(0);
    if (wv.dim(1) != in || bv.size() != out) {
        throw ShapeError("linear: input " + shape_string(xv.shape) + ", weight " + shape_string(wv.shape) +
                         ", bias " + shape_string(bv.shape) + " are inconsistent");
    }
    Tensor y({batch, out});
    for (std::size_t b = 0; b < batch; ++b) {
        const double* xr = &xv.data[b * in];
        for (std::size_t o = 0; o < out; ++o) {
            const double* wr = &wv.data[o * in];
            double acc = bv[o];
            for (std::size_t i = 0; i < in; ++i) {
                acc += wr[i] * xr[i];
            }
            y[b * out + o] = acc;
        }
    }
    return g.record(std::move(y), {x, weight, bias}, [=](Graph& gr, Var self) {
        const Tensor& gy = gr.grad(self);
        const Tensor& xv2 = gr.value(x);
        const Tensor& wv2 = gr.value(weight);
        if (gr.requires_grad(x)) {
            Tensor& gx = gr.grad_buffer(x);
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t o = 0; o < out; ++o) {
                    const double go = gy[b * out + o];
                    const double* wr = &wv2.data[o * in];
                    double* gxr = &gx.data[b * in];
                    for (std::size_t i = 0; i < in; ++i) {
                        gxr[i] += go * wr[i];
                    }
                }
            }
        }
        if (gr.requires_grad(weight)) {
            Tensor& gw = gr.grad_buffer(weight);
            for (std::size_t b = 0; b < batch; ++b) {
                const double* xr = &xv2.data[b * in];
                for (std::size_t o = 0; o < out; ++o) {
                    const double go = gy[b * out + o];
                    double* gwr = &gw.data[o * in];
                    for (std::size_t i = 0; i < in; ++i) {
                        gwr[i] += go * xr[i];
                    }
                }
            }
        }
        if (gr.requires_grad(bias)) {
            Tensor& gb = gr.grad_buffer(bias);
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t o = 0; o < out; ++o) {
                    gb[o] += gy[b * out + o];
                }
            }
        }
    });
}

Var relu(Graph& g, Var x) {
    return elementwise(
        g, x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double xv, double) { return xv > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Graph& g, Var x) {
    return elementwise(g, x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Graph& g, Var x) {
    return elementwise(
        g, x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var conv1d(Graph& g, Var x, Var weight, Var bias, const Conv1dSpec& spec) {
    const Tensor& xv = g.value(x);
    require_rank(xv, 3, "conv1d", "input");
    if (xv.dim(1) != spec.in_channels) {
        throw ShapeError("conv1d: input has " + std::to_string(xv.dim(1)) + " channels, spec expects " +
                         std::to_string(spec.in_channels));
    }
    const std::size_t batch = xv.dim(0);
    const std::size_t length = xv.dim(2);
    const std::size_t out_len = spec.output_length(length);
    Tensor y({batch, spec.out_channels, out_len});
    conv1d_forward(xv.values(), batch, length, g.value(weight).values(), g.value(bias).values(), spec, y.values());
    return g.record(std::move(y), {x, weight, bias}, [=](Graph& gr, Var self) {
        const Tensor& gy = gr.grad(self);
        if (gr.requires_grad(x)) {
            conv1d_adjoint(gy.values(), batch, length, gr.value(weight).values(), spec,
                           gr.grad_buffer(x).values());
        }
        if (gr.requires_grad(weight)) {
            conv1d_weight_grad(gr.value(x).values(), batch, length, gy.values(), spec,
                               gr.grad_buffer(weight).values());
        }
        if (gr.requires_grad(bias)) {
            Tensor& gb = gr.grad_buffer(bias);
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t o = 0; o < spec.out_channels; ++o) {
                    for (std::size_t t = 0; t < out_len; ++t) {
                        gb[o] += gy[(b * spec.out_channels + o) * out_len + t];
                    }
                }
            }
        }
    });
}

Var conv_transpose1d(Graph& g, Var y, Var weight, Var bias, const Conv1dSpec& spec) {
    const Tensor& yv = g.value(y);
    require_rank(yv, 3, "conv_transpose1d", "input");
    if (yv.dim(1) != spec.in_channels) {
        throw ShapeError("conv_transpose1d: input has " + std::to_string(yv.dim(1)) + " channels, spec expects " +
                         std::to_string(spec.in_channels));
    }
    // The forward convolution this layer is the adjoint of.
    Conv1dSpec fwd = spec;
    fwd.in_channels = spec.out_channels;
    fwd.out_channels = spec.in_channels;

    const std::size_t batch = yv.dim(0);
    const std::size_t in_len = yv.dim(2);
    const std::size_t out_len = fwd.transposed_output_length(in_len);
    const Tensor& bv = g.value(bias);
    if (bv.size() != spec.out_channels) {
        throw ShapeError("conv_transpose1d: bias must have out_channels entries");
    }
    Tensor out({batch, spec.out_channels, out_len});
    conv1d_adjoint(yv.values(), batch, out_len, g.value(weight).values(), fwd, out.values());
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < spec.out_channels; ++c) {
            for (std::size_t t = 0; t < out_len; ++t) {
                out[(b * spec.out_channels + c) * out_len + t] += bv[c];
            }
        }
    }
    return g.record(std::move(out), {y, weight, bias}, [=](Graph& gr, Var self) {
        const Tensor& gout = gr.grad(self);
        if (gr.requires_grad(y)) {
            Tensor tmp({batch, spec.in_channels, in_len});
            conv1d_forward(gout.values(), batch, out_len, gr.value(weight).values(), {}, fwd, tmp.values());
            add_into(gr.grad_buffer(y), tmp);
        }
        if (gr.requires_grad(weight)) {
            conv1d_weight_grad(gout.values(), batch, out_len, gr.value(y).values(), fwd,
                               gr.grad_buffer(weight).values());
        }
        if (gr.requires_grad(bias)) {
            Tensor& gb = gr.grad_buffer(bias);
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t c = 0; c < spec.out_channels; ++c) {
                    for (std::size_t t = 0; t < out_len; ++t) {
                        gb[c] += gout[(b * spec.out_channels + c) * out_len + t];
                    }
                }
            }
        }
    });
}

Var reshape(Graph& g, Var x, Shape shape) {
    const Tensor& xv = g.value(x);
    if (shape_size(shape) != xv.size()) {
        throw ShapeError("reshape: cannot view " + shape_string(xv.shape) + " as " + shape_string(shape));
    }
    Tensor y(std::move(shape), xv.data);
    return g.record(std::move(y), {x}, [x](Graph& gr, Var self) { add_into(gr.grad_buffer(x), gr.grad(self)); });
}

Var slice_columns(Graph& g, Var x, std::size_t begin, std::size_t count) {
    const Tensor& xv = g.value(x);
    require_rank(xv, 2, "slice_columns", "input");
    const std::size_t batch = xv.dim(0);
    const std::size_t cols = xv.dim(1);
    if (begin + count > cols) {
        throw ShapeError("slice_columns: range exceeds " + std::to_string(cols) + " columns");
    }
    Tensor y({batch, count});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < count; ++j) {
            y[b * count + j] = xv[b * cols + begin + j];
        }
    }
    return g.record(std::move(y), {x}, [=](Graph& gr, Var self) {
        const Tensor& gy = gr.grad(self);
        Tensor& gx = gr.grad_buffer(x);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t j = 0; j < count; ++j) {
                gx[b * cols + begin + j] += gy[b * count + j];
            }
        }
    });
}

Var concat_columns(Graph& g, Var a, Var b) {
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    require_rank(av, 2, "concat_columns", "lhs");
    require_rank(bv, 2, "concat_columns", "rhs");
    if (av.dim(0) != bv.dim(0)) {
        throw ShapeError("concat_columns: batch sizes differ");
    }
    const std::size_t batch = av.dim(0);
    const std::size_t na = av.dim(1);
    const std::size_t nb = bv.dim(1);
    Tensor y({batch, na + nb});
    for (std::size_t r = 0; r < batch; ++r) {
        std::copy_n(&av.data[r * na], na, &y.data[r * (na + nb)]);
        std::copy_n(&bv.data[r * nb], nb, &y.data[r * (na + nb) + na]);
    }
    return g.record(std::move(y), {a, b}, [=](Graph& gr, Var self) {
        const Tensor& gy = gr.grad(self);
        if (gr.requires_grad(a)) {
            Tensor& ga = gr.grad_buffer(a);
            for (std::size_t r = 0; r < batch; ++r) {
                for (std::size_t j = 0; j < na; ++j) {
                    ga[r * na + j] += gy[r * (na + nb) + j];
                }
            }
        }
        if (gr.requires_grad(b)) {
            Tensor& gb = gr.grad_buffer(b);
            for (std::size_t r = 0; r < batch; ++r) {
                for (std::size_t j = 0; j < nb; ++j) {
                    gb[r * nb + j] += gy[r * (na + nb) + na + j];
                }
            }
        }
    });
}

Var reparameterize(Graph& g, Var mu, Var logvar, const Tensor& noise) {
    const Tensor& m = g.value(mu);
    const Tensor& lv = g.value(logvar);
    if (m.shape != lv.shape || m.shape != noise.shape) {
        throw ShapeError("reparameterize: mu " + shape_string(m.shape) + ", logvar " + shape_string(lv.shape) +
                         ", noise " + shape_string(noise.shape) + " must match");
    }
    Tensor z(m.shape);
    for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] = m[i] + std::exp(0.5 * lv[i]) * noise[i];
    }
    return g.record(std::move(z), {mu, logvar}, [=](Graph& gr, Var self) {
        const Tensor& gz = gr.grad(self);
        if (gr.requires_grad(mu)) {
            add_into(gr.grad_buffer(mu), gz);
        }
        if (gr.requires_grad(logvar)) {
            const Tensor& lv2 = gr.value(logvar);
            Tensor& gl = gr.grad_buffer(logvar);
            for (std::size_t i = 0; i < gl.size(); ++i) {
                gl[i] += gz[i] * noise[i] * 0.5 * std::exp(0.5 * lv2[i]);
            }
        }
    });
}

Tensor kl_per_dimension(const Tensor& mu, const Tensor& logvar) {
    if (mu.shape != logvar.shape) {
        throw ShapeError("kl_per_dimension: mu and logvar shapes differ");
    }
    Tensor out(mu.shape);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = 0.5 * (mu[i] * mu[i] + std::exp(logvar[i]) - 1.0 - logvar[i]);
    }
    return out;
}

Var elbo_loss(Graph& g, Var target, Var reconstruction, Var mu, Var logvar, double beta, ElboTerms* terms) {
    const Tensor& x = g.value(target);
    const Tensor& xh = g.value(reconstruction);
    const Tensor& m = g.value(mu);
    const Tensor& lv = g.value(logvar);
    if (x.size() != xh.size() || x.rank() == 0 || xh.dim(0) != x.dim(0)) {
        throw ShapeError("elbo_loss: target " + shape_string(x.shape) + " and reconstruction " +
                         shape_string(xh.shape) + " differ");
    }
    if (m.shape != lv.shape || m.rank() == 0 || m.dim(0) != x.dim(0)) {
        throw ShapeError("elbo_loss: latent shapes " + shape_string(m.shape) + " / " + shape_string(lv.shape) +
                         " inconsistent with batch " + std::to_string(x.dim(0)));
    }
    const double inv_batch = 1.0 / static_cast<double>(x.dim(0));
    double bce = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        bce -= x[i] * std::log(xh[i] + kBceEpsilon) + (1.0 - x[i]) * std::log(1.0 - xh[i] + kBceEpsilon);
    }
    bce *= inv_batch;
    double kl = 0.0;
    if (beta != 0.0 || terms != nullptr) {
        for (std::size_t i = 0; i < m.size(); ++i) {
            kl += 0.5 * (m[i] * m[i] + std::exp(lv[i]) - 1.0 - lv[i]);
        }
        kl *= inv_batch;
    }
    const double total = beta == 0.0 ? bce : bce + beta * kl;
    if (terms != nullptr) {
        *terms = {bce, kl, total};
    }
    return g.record(Tensor({1}, {total}), {reconstruction, mu, logvar}, [=](Graph& gr, Var self) {
        const double gl = gr.grad(self)[0];
        if (gr.requires_grad(reconstruction)) {
            const Tensor& xv = gr.value(target);
            const Tensor& xhv = gr.value(reconstruction);
            Tensor& gx = gr.grad_buffer(reconstruction);
            for (std::size_t i = 0; i < gx.size(); ++i) {
                gx[i] += gl * inv_batch *
                         (-xv[i] / (xhv[i] + kBceEpsilon) + (1.0 - xv[i]) / (1.0 - xhv[i] + kBceEpsilon));
            }
        }
        if (beta == 0.0) {
            return;
        }
        const double scale = gl * beta * inv_batch;
        if (gr.requires_grad(mu)) {
            const Tensor& mv = gr.value(mu);
            Tensor& gm = gr.grad_buffer(mu);
            for (std::size_t i = 0; i < gm.size(); ++i) {
                gm[i] += scale * mv[i];
            }
        }
        if (gr.requires_grad(logvar)) {
            const Tensor& lvv = gr.value(logvar);
            Tensor& glv = gr.grad_buffer(logvar);
            for (std::size_t i = 0; i < glv.size(); ++i) {
                glv[i] += scale * 0.5 * (std::exp(lvv[i]) - 1.0);
            }
        }
    });
}

Var mse(Graph& g, Var prediction, const Tensor& target) {
    const Tensor& p = g.value(prediction);
    if (p.size() != target.size()) {
        throw ShapeError("mse: prediction " + shape_string(p.shape) + " vs target " + shape_string(target.shape));
    }
    const double n = static_cast<double>(p.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p[i] - target[i];
        acc += d * d;
    }
    return g.record(Tensor({1}, {acc / n}), {prediction}, [=](Graph& gr, Var self) {
        const double gl = gr.grad(self)[0];
        const Tensor& pv = gr.value(prediction);
        Tensor& gp = gr.grad_buffer(prediction);
        for (std::size_t i = 0; i < gp.size(); ++i) {
            gp[i] += gl * 2.0 * (pv[i] - target[i]) / n;
        }
    });
}

double gaussian_log_prob(std::span<const double> action, std::span<const double> mean,
                         std::span<const double> log_std) {
    constexpr double half_log_two_pi = 0.91893853320467274178;
    double lp = 0.0;
    for (std::size_t a = 0; a < action.size(); ++a) {
        const double z = (action[a] - mean[a]) * std::exp(-log_std[a]);
        lp += -0.5 * z * z - log_std[a] - half_log_two_pi;
    }
    return lp;
}

Var ppo_loss(Graph& g, Var mean, Var log_std, Var value, const PpoBatch& batch, const PpoLossConfig& cfg,
             PpoLossTerms* terms) {
    const Tensor& mv = g.value(mean);
    const Tensor& ls = g.value(log_std);
    const Tensor& vv = g.value(value);
    require_rank(mv, 2, "ppo_loss", "mean");
    const std::size_t n = mv.dim(0);
    const std::size_t act = mv.dim(1);
    if (ls.size() != act || vv.size() != n || batch.actions.size() != n * act || batch.old_log_prob.size() != n ||
        batch.advantages.size() != n || batch.returns.size() != n) {
        throw ShapeError("ppo_loss: batch tensors are inconsistent with mean " + shape_string(mv.shape));
    }
    constexpr double half_log_two_pi = 0.91893853320467274178;
    const double inv_n = 1.0 / static_cast<double>(n);

    // d(policy_loss)/d(log_prob_b) for every sample.
    std::vector<double> dlogp(n, 0.0);
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double clipped = 0.0;
    double approx_kl = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
        const double lp = gaussian_log_prob(std::span(&batch.actions.data[b * act], act),
                                            std::span(&mv.data[b * act], act), ls.values());
        const double log_ratio = lp - batch.old_log_prob[b];
        const double ratio = std::exp(log_ratio);
        const double adv = batch.advantages[b];
        const double clipped_ratio = std::clamp(ratio, 1.0 - cfg.clip_range, 1.0 + cfg.clip_range);
        const double s1 = ratio * adv;
        const double s2 = clipped_ratio * adv;
        if (s1 <= s2) {
            policy_loss -= s1;
            dlogp[b] = -ratio * adv * inv_n;
        } else {
            policy_loss -= s2;
            dlogp[b] = clipped_ratio == ratio ? -ratio * adv * inv_n : 0.0;
        }
        if (std::abs(ratio - 1.0) > cfg.clip_range) {
            clipped += 1.0;
        }
        approx_kl += (ratio - 1.0) - log_ratio;
        const double dv = vv[b] - batch.returns[b];
        value_loss += dv * dv;
    }
    policy_loss *= inv_n;
    value_loss *= inv_n;
    double entropy = 0.0;
    for (std::size_t a = 0; a < act; ++a) {
        entropy += 0.5 + half_log_two_pi + ls[a];
    }
    const double total = policy_loss + cfg.vf_coef * value_loss - cfg.ent_coef * entropy;
    if (terms != nullptr) {
        *terms = {policy_loss, value_loss, entropy, clipped * inv_n, approx_kl * inv_n, total};
    }

    return g.record(Tensor({1}, {total}), {mean, log_std, value}, [=, actions = batch.actions, returns = batch.returns](Graph& gr, Var self) {
        const double gl = gr.grad(self)[0];
        const Tensor& mv2 = gr.value(mean);
        const Tensor& ls2 = gr.value(log_std);
        const bool want_mean = gr.requires_grad(mean);
        const bool want_std = gr.requires_grad(log_std);
        if (want_mean || want_std) {
            Tensor* gm = want_mean ? &gr.grad_buffer(mean) : nullptr;
            Tensor* gs = want_std ? &gr.grad_buffer(log_std) : nullptr;
            for (std::size_t b = 0; b < n; ++b) {
                if (dlogp[b] == 0.0) {
                    continue;
                }
                for (std::size_t a = 0; a < act; ++a) {
                    const double inv_var = std::exp(-2.0 * ls2[a]);
                    const double diff = actions[b * act + a] - mv2[b * act + a];
                    if (gm) {
                        (*gm)[b * act + a] += gl * dlogp[b] * diff * inv_var;
                    }
                    if (gs) {
                        (*gs)[a] += gl * dlogp[b] * (diff * diff * inv_var - 1.0);
                    }
                }
            }
            if (gs) {
                for (std::size_t a = 0; a < act; ++a) {
                    (*gs)[a] -= gl * cfg.ent_coef;
                }
            }
        }
        if (gr.requires_grad(value)) {
            const Tensor& vv2 = gr.value(value);
            Tensor& gv = gr.grad_buffer(value);
            for (std::size_t b = 0; b < n; ++b) {
                gv[b] += gl * cfg.vf_coef * 2.0 * (vv2[b] - returns[b]) * inv_n;
            }
        }
    });
}

}  // namespace asvlab::nn

namespace asvlab::nn {

Var add(Graph& g, Var a, Var b) {
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    if (av.shape != bv.shape) {
        throw ShapeError("add: " + shape_string(av.shape) + " vs " + shape_string(bv.shape));
    }
    Tensor y = av;
    add_into(y, bv);
    return g.record(std::move(y), {a, b}, [=](Graph& gr, Var self) {
        const Tensor& gy = gr.grad(self);
        for (Var p : {a, b}) {
            if (gr.requires_grad(p)) {
                add_into(gr.grad_buffer(p), gy);
            }
        }
    });
}

Var weighted_sum(Graph& g, Var x, const Tensor& weights) {
    const Tensor& xv = g.value(x);
    if (xv.size() != weights.size()) {
        throw ShapeError("weighted_sum: " + shape_string(xv.shape) + " vs weights " + shape_string(weights.shape));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) {
        acc += xv[i] * weights[i];
    }
    return g.record(Tensor({1}, {acc}), {x}, [=](Graph& gr, Var self) {
        const double gl = gr.grad(self)[0];
        Tensor& gx = gr.grad_buffer(x);
        for (std::size_t i = 0; i < gx.size(); ++i) {
            gx[i] += gl * weights[i];
        }
    });
}

}  // namespace asvlab::nn
