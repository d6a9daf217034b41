// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gescl/tensor.hpp"

#include <cstdint>
#include <vector>

namespace gescl {

class MultiHeadNetwork;

/// One primitive applied during a forward pass, with what backward needs.
struct TapeRecord {
    enum class Op { conv2d, relu, maxpool2x2, dense };

    Op op = Op::conv2d;
    std::size_t param = 0;              ///< conv layer index or head index
    Tensor4 saved;                      ///< conv/dense input, relu output
    Dims4 input_dims{};                 ///< maxpool input shape
    std::vector<std::uint32_t> argmax;  ///< maxpool routing
};

/// Ordered record of a forward pass over a fixed network.
///
/// The tape keeps a pointer to the network it was recorded against; the
/// network must outlive the tape and stay unmodified until backward runs.
class GradientTape {
public:
    GradientTape() = default;
    explicit GradientTape(const MultiHeadNetwork& net) : net_(&net) {}

    void push(TapeRecord record) { records_.push_back(std::move(record)); }
    bool empty() const noexcept { return records_.empty(); }
    const std::vector<TapeRecord>& records() const noexcept { return records_; }
    const MultiHeadNetwork* network() const noexcept { return net_; }

private:
    const MultiHeadNetwork* net_ = nullptr;
    std::vector<TapeRecord> records_;
};

/// Gradients of a scalar loss for every trunk parameter and the one head the
/// forward pass used.
struct NetworkGradients {
    std::vector<Tensor4> kernels;
    std::vector<std::vector<double>> biases;
    std::size_t head = 0;
    std::vector<double> head_weights;
    std::vector<double> head_bias;

    /// All gradient entries in the network's parameter order (trunk kernels
    /// and biases layer by layer, then the head).
    std::vector<double> flatten() const;
};

/// Reverse sweep over the tape. `grad_logits` is dLoss/dlogits with the
/// logits' shape. Throws StateError for an empty tape.
NetworkGradients backward(const GradientTape& tape, const Tensor4& grad_logits);

} // namespace gescl
