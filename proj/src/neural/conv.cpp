#include "asvlab/neural/conv.hpp"

#include "asvlab/error.hpp"

#include <string>
#include <vector>

namespace asvlab::nn {

std::size_t Conv1dSpec::output_length(std::size_t input_length) const {
    if (stride == 0 || kernel == 0) {
        throw ShapeError("conv1d: kernel and stride must be positive");
    }
    if (input_length + 2 * padding < kernel) {
        throw ShapeError("conv1d: padded length " + std::to_string(input_length + 2 * padding) +
                         " is shorter than kernel " + std::to_string(kernel));
    }
    return (input_length + 2 * padding - kernel) / stride + 1;
}

std::size_t Conv1dSpec::transposed_output_length(std::size_t input_length) const {
    if (input_length == 0) {
        throw ShapeError("conv_transpose1d: empty input");
    }
    const std::size_t grown = (input_length - 1) * stride + kernel;
    if (grown < 2 * padding + 1) {
        throw ShapeError("conv_transpose1d: padding " + std::to_string(padding) + " too large for input length " +
                         std::to_string(input_length));
    }
    const std::size_t out = grown - 2 * padding;
    if (output_length(out) != input_length) {
        throw ShapeError("conv_transpose1d: output length " + std::to_string(out) +
                         " does not map back to input length " + std::to_string(input_length));
    }
    return out;
}

namespace {

/// Source index in the unpadded signal for every padded position, -1 for a
/// zero pad.
std::vector<long> padded_sources(std::size_t length, const Conv1dSpec& spec) {
    const std::size_t padded = length + 2 * spec.padding;
    std::vector<long> src(padded);
    const auto n = static_cast<long>(length);
    for (std::size_t j = 0; j < padded; ++j) {
        const long i = static_cast<long>(j) - static_cast<long>(spec.padding);
        if (spec.mode == PaddingMode::circular) {
            src[j] = ((i % n) + n) % n;
        } else {
            src[j] = (i >= 0 && i < n) ? i : -1;
        }
    }
    return src;
}

void check_sizes(std::size_t x_size, std::size_t batch, std::size_t length, std::size_t w_size,
                 const Conv1dSpec& spec, const char* what) {
    if (x_size != batch * spec.in_channels * length) {
        throw ShapeError(std::string(what) + ": input has " + std::to_string(x_size) + " values, expected " +
                         std::to_string(batch * spec.in_channels * length));
    }
    if (w_size != spec.weight_size()) {
        throw ShapeError(std::string(what) + ": weight has " + std::to_string(w_size) + " values, expected " +
                         std::to_string(spec.weight_size()));
    }
}

}  // namespace

void conv1d_forward(std::span<const double> x, std::size_t batch, std::size_t length,
                    std::span<const double> weight, std::span<const double> bias, const Conv1dSpec& spec,
                    std::span<double> y) {
    check_sizes(x.size(), batch, length, weight.size(), spec, "conv1d");
    const std::size_t out_len = spec.output_length(length);
    if (y.size() != batch * spec.out_channels * out_len) {
        throw ShapeError("conv1d: output buffer has wrong size");
    }
    if (!bias.empty() && bias.size() != spec.out_channels) {
        throw ShapeError("conv1d: bias must have out_channels entries");
    }
    const auto src = padded_sources(length, spec);
    const std::size_t ci = spec.in_channels;
    const std::size_t co = spec.out_channels;
    const std::size_t k_len = spec.kernel;
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t o = 0; o < co; ++o) {
            const double b0 = bias.empty() ? 0.0 : bias[o];
            for (std::size_t t = 0; t < out_len; ++t) {
                double acc = b0;
                for (std::size_t c = 0; c < ci; ++c) {
                    const double* w = &weight[(o * ci + c) * k_len];
                    const double* xs = &x[(b * ci + c) * length];
                    const long* s = &src[t * spec.stride];
                    for (std::size_t k = 0; k < k_len; ++k) {
                        if (s[k] >= 0) {
                            acc += w[k] * xs[s[k]];
                        }
                    }
                }
                y[(b * co + o) * out_len + t] = acc;
            }
        }
    }
}

void conv1d_adjoint(std::span<const double> y, std::size_t batch, std::size_t length,
                    std::span<const double> weight, const Conv1dSpec& spec, std::span<double> x_acc) {
    check_sizes(x_acc.size(), batch, length, weight.size(), spec, "conv1d adjoint");
    const std::size_t out_len = spec.output_length(length);
    if (y.size() != batch * spec.out_channels * out_len) {
        throw ShapeError("conv1d adjoint: input has " + std::to_string(y.size()) + " values, expected " +
                         std::to_string(batch * spec.out_channels * out_len));
    }
    const auto src = padded_sources(length, spec);
    const std::size_t ci = spec.in_channels;
    const std::size_t co = spec.out_channels;
    const std::size_t k_len = spec.kernel;
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t o = 0; o < co; ++o) {
            for (std::size_t t = 0; t < out_len; ++t) {
                const double g = y[(b * co + o) * out_len + t];
                for (std::size_t c = 0; c < ci; ++c) {
                    const double* w = &weight[(o * ci + c) * k_len];
                    double* xs = &x_acc[(b * ci + c) * length];
                    const long* s = &src[t * spec.stride];
                    for (std::size_t k = 0; k < k_len; ++k) {
                        if (s[k] >= 0) {
                            xs[s[k]] += w[k] * g;
                        }
                    }
                }
            }
        }
    }
}

void conv1d_weight_grad(std::span<const double> x, std::size_t batch, std::size_t length,
                        std::span<const double> y_grad, const Conv1dSpec& spec, std::span<double> gw_acc) {
    check_sizes(x.size(), batch, length, gw_acc.size(), spec, "conv1d weight grad");
    const std::size_t out_len = spec.output_length(length);
    if (y_grad.size() != batch * spec.out_channels * out_len) {
        throw ShapeError("conv1d weight grad: output gradient has wrong size");
    }
    const auto src = padded_sources(length, spec);
    const std::size_t ci = spec.in_channels;
    const std::size_t co = spec.out_channels;
    const std::size_t k_len = spec.kernel;
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t o = 0; o < co; ++o) {
            for (std::size_t t = 0; t < out_len; ++t) {
                const double g = y_grad[(b * co + o) * out_len + t];
                if (g == 0.0) {
                    continue;
                }
                for (std::size_t c = 0; c < ci; ++c) {
                    double* gw = &gw_acc[(o * ci + c) * k_len];
                    const double* xs = &x[(b * ci + c) * length];
                    const long* s = &src[t * spec.stride];
                    for (std::size_t k = 0; k < k_len; ++k) {
                        if (s[k] >= 0) {
                            gw[k] += g * xs[s[k]];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace asvlab::nn
