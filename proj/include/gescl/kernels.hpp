// SPDX-License-Identifier: Apache-2.0
#pragma once

// Layer primitives used by the CNN trunk and heads.
//
// Two implementations share one interface:
//   gescl::kernels   - OpenMP-parallel, used for training and evaluation
//   gescl::reference - plain serial loops, kept as the test oracle and the
//                      baseline for bench/
//
// Convolutions are stride 1 with "same" padding: pad_before = (k - 1) / 2,
// pad_after = k - 1 - pad_before. Max pooling is 2x2 / stride 2 and drops a
// trailing odd row or column. The parallel kernels are deterministic: every
// output element is reduced in a fixed order independent of the thread count.

#include "gescl/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace gescl {

struct Conv2dGrads {
    Tensor4 input;              ///< empty when not requested
    Tensor4 kernel;
    std::vector<double> bias;
};

struct PoolResult {
    Tensor4 output;
    std::vector<std::uint32_t> argmax;  ///< flat input index of each output cell
};

struct DenseGrads {
    Tensor4 input;
    std::vector<double> weights;  ///< features x classes
    std::vector<double> bias;
};

struct LossAndGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

/// Checks shapes for conv2d and throws ShapeError on mismatch.
void check_conv_shapes(const Tensor4& input, const Tensor4& kernel, std::span<const double> bias);

/// Numerically stable -log softmax(logits)[label] and its gradient
/// softmax(logits) - onehot(label). Throws InputError for an out-of-range label.
LossAndGrad softmax_cross_entropy(std::span<const double> logits, std::size_t label);

namespace kernels {

Tensor4 conv2d(const Tensor4& input, const Tensor4& kernel, std::span<const double> bias);
Conv2dGrads conv2d_backward(const Tensor4& input, const Tensor4& kernel, const Tensor4& grad_out,
                            bool need_input_grad);

Tensor4 relu(const Tensor4& x);
/// `output` is the forward result of relu; gradient flows where output > 0.
Tensor4 relu_backward(const Tensor4& output, const Tensor4& grad_out);

PoolResult maxpool2x2(const Tensor4& x);
Tensor4 maxpool2x2_backward(const Dims4& input_dims, std::span<const std::uint32_t> argmax,
                            const Tensor4& grad_out);

/// logits(n, 0, 0, c) = bias[c] + sum_f input[n][f] * weights[f * classes + c]
Tensor4 dense(const Tensor4& input, std::span<const double> weights, std::span<const double> bias);
DenseGrads dense_backward(const Tensor4& input, std::span<const double> weights,
                          const Tensor4& grad_out, bool need_input_grad);

} // namespace kernels

namespace reference {

Tensor4 conv2d(const Tensor4& input, const Tensor4& kernel, std::span<const double> bias);
Conv2dGrads conv2d_backward(const Tensor4& input, const Tensor4& kernel, const Tensor4& grad_out,
                            bool need_input_grad);

Tensor4 relu(const Tensor4& x);
Tensor4 relu_backward(const Tensor4& output, const Tensor4& grad_out);

PoolResult maxpool2x2(const Tensor4& x);
Tensor4 maxpool2x2_backward(const Dims4& input_dims, std::span<const std::uint32_t> argmax,
                            const Tensor4& grad_out);

Tensor4 dense(const Tensor4& input, std::span<const double> weights, std::span<const double> bias);
DenseGrads dense_backward(const Tensor4& input, std::span<const double> weights,
                          const Tensor4& grad_out, bool need_input_grad);

} // namespace reference

} // namespace gescl
