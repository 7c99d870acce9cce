// Raw 1-D convolution kernels on (batch, channels, length) buffers.
//
// Convolution here is cross-correlation (deep-learning convention):
//
//   y[b,o,t] = bias[o] + sum_c sum_k w[o,c,k] * xpad[b,c,t*stride + k]
//
// where xpad is x padded by `padding` on both sides, circularly (the ring
// topology of a 360 degree scan) or with zeros. Weights are laid out as
// (out_channels, in_channels, kernel).
//
// The transposed ("CPTC-1D" when circular) operation is the exact linear
// adjoint of the forward map: <conv(x), y> == <x, conv_adjoint(y)>. Its
// weights reuse the forward layout, so a transposed layer with
// (in=Ci, out=Co) stores a (Ci, Co, K) tensor, like PyTorch ConvTranspose1d.
#pragma once

#include <cstddef>
#include <span>

namespace asvlab::nn {

enum class PaddingMode { circular, zeros };

struct Conv1dSpec {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;
    PaddingMode mode = PaddingMode::circular;

    /// floor((L + 2p - K) / s) + 1. Throws ShapeError when L + 2p < K.
    std::size_t output_length(std::size_t input_length) const;
    /// (L_in - 1) s - 2p + K; the forward input length this spec restores.
    /// Throws ShapeError when the forward map of the result does not
    /// produce L_in again.
    std::size_t transposed_output_length(std::size_t input_length) const;
    std::size_t weight_size() const { return out_channels * in_channels * kernel; }
};

/// y <- conv(x) (+ bias when non-empty). y has batch*out_channels*L_out entries.
void conv1d_forward(std::span<const double> x, std::size_t batch, std::size_t length,
                    std::span<const double> weight, std::span<const double> bias, const Conv1dSpec& spec,
                    std::span<double> y);

/// x_acc += conv^T(y). `length` is the forward input length.
void conv1d_adjoint(std::span<const double> y, std::size_t batch, std::size_t length,
                    std::span<const double> weight, const Conv1dSpec& spec, std::span<double> x_acc);

/// gw_acc += d<y_grad, conv(x)>/dw.
void conv1d_weight_grad(std::span<const double> x, std::size_t batch, std::size_t length,
                        std::span<const double> y_grad, const Conv1dSpec& spec, std::span<double> gw_acc);

}  // namespace asvlab::nn
