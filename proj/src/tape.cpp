// SPDX-License-Identifier: Apache-2.0
#include "gescl/tape.hpp"

#include "gescl/errors.hpp"
#include "gescl/kernels.hpp"
#include "gescl/model.hpp"

namespace gescl {

std::vector<double> NetworkGradients::flatten() const
{
    std::vector<double> out;
    for (std::size_t i = 0; i < kernels.size(); ++i) {
        out.insert(out.end(), kernels[i].values().begin(), kernels[i].values().end());
        out.insert(out.end(), biases[i].begin(), biases[i].end());
    }
    out.insert(out.end(), head_weights.begin(), head_weights.end());
    out.insert(out.end(), head_bias.begin(), head_bias.end());
    return out;
}

NetworkGradients backward(const GradientTape& tape, const Tensor4& grad_logits)
{
    if (tape.empty() || tape.network() == nullptr)
        throw StateError("backward: tape is empty; run forward with record_tape first");
    const MultiHeadNetwork& net = *tape.network();

    NetworkGradients g;
    for (const auto& layer : net.layers()) {
        g.kernels.emplace_back(layer.kernel.dims());
        g.biases.emplace_back(layer.bias.size(), 0.0);
    }

    const auto& records = tape.records();
    Tensor4 grad = grad_logits;
    for (auto it = records.rbegin(); it != records.rend(); ++it) {
        switch (it->op) {
        case TapeRecord::Op::dense: {
            const HeadParams& head = net.head(it->param);
            if (grad.dims() != Dims4{it->saved.dim(0), 1, 1, head.classes})
                throw ShapeError("backward: grad_logits dims " + to_string(grad.dims()) +
                                 " do not match the recorded logits");
            DenseGrads dg = kernels::dense_backward(it->saved, head.weights, grad, true);
            g.head = it->param;
            g.head_weights = std::move(dg.weights);
            g.head_bias = std::move(dg.bias);
            grad = std::move(dg.input);
            break;
        }
        case TapeRecord::Op::maxpool2x2:
            grad = kernels::maxpool2x2_backward(it->input_dims, it->argmax, grad);
            break;
        case TapeRecord::Op::relu:
            grad = kernels::relu_backward(it->saved, grad);
            break;
        case TapeRecord::Op::conv2d: {
            const bool need_input = it->param > 0;
            Conv2dGrads cg = kernels::conv2d_backward(it->saved, net.layer(it->param).kernel, grad, need_input);
            g.kernels[it->param] = std::move(cg.kernel);
            g.biases[it->param] = std::move(cg.bias);
            grad = std::move(cg.input);
            break;
        }
        }
    }
    return g;
}

} // namespace gescl
