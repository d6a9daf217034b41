// SPDX-License-Identifier: Apache-2.0
#include "gescl/kernels.hpp"

#include "gescl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include <omp.h>

namespace gescl {

void check_conv_shapes(const Tensor4& input, const Tensor4& kernel, std::span<const double> bias)
{
    const auto& in = input.dims();
    const auto& k = kernel.dims();
    if (k[0] != k[1])
        throw ShapeError("conv2d: kernel must be square, got " + to_string(k));
    if (k[0] == 0 || k[3] == 0)
        throw ShapeError("conv2d: empty kernel " + to_string(k));
    if (k[0] > in[1] || k[1] > in[2])
        throw ShapeError("conv2d: kernel " + to_string(k) + " larger than input " + to_string(in));
    if (k[2] != in[3])
        throw ShapeError("conv2d: input has " + std::to_string(in[3]) + " channels, kernel expects " +
                         std::to_string(k[2]));
    if (bias.size() != k[3])
        throw ShapeError("conv2d: bias length " + std::to_string(bias.size()) + " != out channels " +
                         std::to_string(k[3]));
}

LossAndGrad softmax_cross_entropy(std::span<const double> logits, std::size_t label)
{
    if (logits.empty())
        throw InputError("softmax_cross_entropy: empty logits");
    if (label >= logits.size())
        throw InputError("softmax_cross_entropy: label " + std::to_string(label) + " out of range for " +
                         std::to_string(logits.size()) + " classes");
    const double peak = *std::max_element(logits.begin(), logits.end());
    LossAndGrad out;
    out.grad.resize(logits.size());
    double total = 0.0;
    for (std::size_t c = 0; c < logits.size(); ++c) {
        out.grad[c] = std::exp(logits[c] - peak);
        total += out.grad[c];
    }
    for (double& g : out.grad)
        g /= total;
    out.grad[label] -= 1.0;
    out.loss = std::log(total) - (logits[label] - peak);
    return out;
}

namespace kernels {

Tensor4 conv2d(const Tensor4& input, const Tensor4& kernel, std::span<const double> bias)
{
    check_conv_shapes(input, kernel, bias);
    const auto batch = static_cast<std::int64_t>(input.dim(0));
    const auto height = static_cast<std::int64_t>(input.dim(1));
    const auto width = static_cast<std::int64_t>(input.dim(2));
    const std::size_t in_ch = input.dim(3);
    const auto ksize = static_cast<std::int64_t>(kernel.dim(0));
    const std::size_t out_ch = kernel.dim(3);
    const std::int64_t pad = (ksize - 1) / 2;

    Tensor4 out({input.dim(0), input.dim(1), input.dim(2), out_ch});
    const double* in_data = input.data();
    const double* k_data = kernel.data();
    double* out_data = out.data();

#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t n = 0; n < batch; ++n) {
        for (std::int64_t oy = 0; oy < height; ++oy) {
            for (std::int64_t ox = 0; ox < width; ++ox) {
                double* o = out_data + ((n * height + oy) * width + ox) * out_ch;
                std::copy(bias.begin(), bias.end(), o);
                for (std::int64_t ky = 0; ky < ksize; ++ky) {
                    const std::int64_t iy = oy + ky - pad;
                    if (iy < 0 || iy >= height)
                        continue;
                    for (std::int64_t kx = 0; kx < ksize; ++kx) {
                        const std::int64_t ix = ox + kx - pad;
                        if (ix < 0 || ix >= width)
                            continue;
                        const double* x = in_data + ((n * height + iy) * width + ix) * in_ch;
                        const double* w = k_data + (ky * ksize + kx) * in_ch * out_ch;
                        for (std::size_t ci = 0; ci < in_ch; ++ci) {
                            const double xv = x[ci];
                            const double* wrow = w + ci * out_ch;
                            for (std::size_t co = 0; co < out_ch; ++co)
                                o[co] += xv * wrow[co];
                        }
                    }
                }
            }
        }
    }
    return out;
}

Conv2dGrads conv2d_backward(const Tensor4& input, const Tensor4& kernel, const Tensor4& grad_out,
                            bool need_input_grad)
{
    const auto batch = static_cast<std::int64_t>(input.dim(0));
    const auto height = static_cast<std::int64_t>(input.dim(1));
    const auto width = static_cast<std::int64_t>(input.dim(2));
    const std::size_t in_ch = input.dim(3);
    const auto ksize = static_cast<std::int64_t>(kernel.dim(0));
    const std::size_t out_ch = kernel.dim(3);
    const std::int64_t pad = (ksize - 1) / 2;
    if (grad_out.dims() != Dims4{input.dim(0), input.dim(1), input.dim(2), out_ch})
        throw ShapeError("conv2d_backward: grad_out dims " + to_string(grad_out.dims()));

    Conv2dGrads g;
    g.kernel = Tensor4(kernel.dims());
    g.bias.assign(out_ch, 0.0);

    const double* in_data = input.data();
    const double* k_data = kernel.data();
    const double* go = grad_out.data();
    double* gk = g.kernel.data();

    // Kernel gradient: each thread owns a contiguous block of (ky, kx, ci) rows
    // and sweeps every output position in order, so each entry is summed in
    // (n, oy, ox) order regardless of the thread count.
    const auto rows = static_cast<std::int64_t>(ksize * ksize * static_cast<std::int64_t>(in_ch));
#pragma omp parallel
    {
        const std::int64_t threads = omp_get_num_threads();
        const std::int64_t tid = omp_get_thread_num();
        const std::int64_t r0 = rows * tid / threads;
        const std::int64_t r1 = rows * (tid + 1) / threads;
        for (std::int64_t n = 0; n < batch && r0 < r1; ++n) {
            for (std::int64_t oy = 0; oy < height; ++oy) {
                for (std::int64_t ox = 0; ox < width; ++ox) {
                    const double* dy = go + ((n * height + oy) * width + ox) * out_ch;
                    for (std::int64_t ky = 0; ky < ksize; ++ky) {
                        const std::int64_t iy = oy + ky - pad;
                        if (iy < 0 || iy >= height)
                            continue;
                        for (std::int64_t kx = 0; kx < ksize; ++kx) {
                            const std::int64_t ix = ox + kx - pad;
                            if (ix < 0 || ix >= width)
                                continue;
                            const std::int64_t base = (ky * ksize + kx) * static_cast<std::int64_t>(in_ch);
                            const std::int64_t c0 = std::max<std::int64_t>(r0 - base, 0);
                            const std::int64_t c1 =
                                std::min<std::int64_t>(r1 - base, static_cast<std::int64_t>(in_ch));
                            const double* x = in_data + ((n * height + iy) * width + ix) * in_ch;
                            for (std::int64_t ci = c0; ci < c1; ++ci) {
                                const double xv = x[ci];
                                if (xv == 0.0)
                                    continue;
                                double* row = gk + (base + ci) * out_ch;
                                for (std::size_t co = 0; co < out_ch; ++co)
                                    row[co] += xv * dy[co];
                            }
                        }
                    }
                }
            }
        }
    }

    const std::size_t positions = grad_out.size() / out_ch;
    for (std::size_t p = 0; p < positions; ++p)
        for (std::size_t co = 0; co < out_ch; ++co)
            g.bias[co] += go[p * out_ch + co];

    if (need_input_grad) {
        g.input = Tensor4(input.dims());
        double* gi = g.input.data();
#pragma omp parallel for collapse(2) schedule(static)
        for (std::int64_t n = 0; n < batch; ++n) {
            for (std::int64_t iy = 0; iy < height; ++iy) {
                for (std::int64_t ix = 0; ix < width; ++ix) {
                    double* dx = gi + ((n * height + iy) * width + ix) * in_ch;
                    for (std::int64_t ky = 0; ky < ksize; ++ky) {
                        const std::int64_t oy = iy - ky + pad;
                        if (oy < 0 || oy >= height)
                            continue;
                        for (std::int64_t kx = 0; kx < ksize; ++kx) {
                            const std::int64_t ox = ix - kx + pad;
                            if (ox < 0 || ox >= width)
                                continue;
                            const double* dy = go + ((n * height + oy) * width + ox) * out_ch;
                            const double* w = k_data + (ky * ksize + kx) * in_ch * out_ch;
                            for (std::size_t ci = 0; ci < in_ch; ++ci) {
                                const double* wrow = w + ci * out_ch;
                                double acc = 0.0;
                                for (std::size_t co = 0; co < out_ch; ++co)
                                    acc += wrow[co] * dy[co];
                                dx[ci] += acc;
                            }
                        }
                    }
                }
            }
        }
    }
    return g;
}

Tensor4 relu(const Tensor4& x)
{
    Tensor4 out(x.dims());
    const auto n = static_cast<std::int64_t>(x.size());
    const double* src = x.data();
    double* dst = out.data();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i)
        dst[i] = src[i] > 0.0 ? src[i] : 0.0;
    return out;
}

Tensor4 relu_backward(const Tensor4& output, const Tensor4& grad_out)
{
    if (output.dims() != grad_out.dims())
        throw ShapeError("relu_backward: dims differ");
    Tensor4 out(output.dims());
    const auto n = static_cast<std::int64_t>(output.size());
    const double* y = output.data();
    const double* dy = grad_out.data();
    double* dx = out.data();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i)
        dx[i] = y[i] > 0.0 ? dy[i] : 0.0;
    return out;
}

PoolResult maxpool2x2(const Tensor4& x)
{
    const auto batch = static_cast<std::int64_t>(x.dim(0));
    const std::size_t in_h = x.dim(1);
    const std::size_t in_w = x.dim(2);
    const std::size_t ch = x.dim(3);
    const auto out_h = static_cast<std::int64_t>(in_h / 2);
    const std::size_t out_w = in_w / 2;
    if (x.size() > std::numeric_limits<std::uint32_t>::max())
        throw ShapeError("maxpool2x2: tensor too large for 32-bit argmax");

    PoolResult r;
    r.output = Tensor4({x.dim(0), in_h / 2, out_w, ch});
    r.argmax.resize(r.output.size());
    const double* src = x.data();
    double* dst = r.output.data();
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t n = 0; n < batch; ++n) {
        for (std::int64_t oy = 0; oy < out_h; ++oy) {
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                for (std::size_t c = 0; c < ch; ++c) {
                    std::size_t best = x.index(n, 2 * oy, 2 * ox, c);
                    for (std::size_t dy = 0; dy < 2; ++dy) {
                        for (std::size_t dx = 0; dx < 2; ++dx) {
                            const std::size_t idx = x.index(n, 2 * oy + dy, 2 * ox + dx, c);
                            if (src[idx] > src[best])
                                best = idx;
                        }
                    }
                    const std::size_t o = r.output.index(n, oy, ox, c);
                    dst[o] = src[best];
                    r.argmax[o] = static_cast<std::uint32_t>(best);
                }
            }
        }
    }
    return r;
}

Tensor4 maxpool2x2_backward(const Dims4& input_dims, std::span<const std::uint32_t> argmax,
                            const Tensor4& grad_out)
{
    if (argmax.size() != grad_out.size())
        throw ShapeError("maxpool2x2_backward: argmax/grad size mismatch");
    Tensor4 gin(input_dims);
    double* gi = gin.data();
    const double* go = grad_out.data();
    const auto n = static_cast<std::int64_t>(grad_out.size());
    // Windows do not overlap, so every input cell is written at most once.
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i)
        gi[argmax[i]] += go[i];
    return gin;
}

Tensor4 dense(const Tensor4& input, std::span<const double> weights, std::span<const double> bias)
{
    const std::size_t features = input.stride0();
    const std::size_t classes = bias.size();
    if (weights.size() != features * classes)
        throw ShapeError("dense: weights hold " + std::to_string(weights.size()) + " values, expected " +
                         std::to_string(features) + " x " + std::to_string(classes));
    const auto batch = static_cast<std::int64_t>(input.dim(0));
    Tensor4 out({input.dim(0), 1, 1, classes});
    const double* x = input.data();
    double* y = out.data();
#pragma omp parallel for schedule(static)
    for (std::int64_t n = 0; n < batch; ++n) {
        double* row = y + n * classes;
        std::copy(bias.begin(), bias.end(), row);
        const double* xs = x + n * features;
        for (std::size_t f = 0; f < features; ++f) {
            const double xv = xs[f];
            const double* w = weights.data() + f * classes;
            for (std::size_t c = 0; c < classes; ++c)
                row[c] += xv * w[c];
        }
    }
    return out;
}

DenseGrads dense_backward(const Tensor4& input, std::span<const double> weights, const Tensor4& grad_out,
                          bool need_input_grad)
{
    const std::size_t features = input.stride0();
    const std::size_t classes = grad_out.dim(3);
    const std::size_t batch = input.dim(0);
    if (grad_out.dim(0) != batch || weights.size() != features * classes)
        throw ShapeError("dense_backward: shape mismatch");
    DenseGrads g;
    g.weights.assign(features * classes, 0.0);
    g.bias.assign(classes, 0.0);
    const double* x = input.data();
    const double* dy = grad_out.data();

#pragma omp parallel for schedule(static)
    for (std::int64_t f = 0; f < static_cast<std::int64_t>(features); ++f) {
        double* row = g.weights.data() + f * classes;
        for (std::size_t n = 0; n < batch; ++n) {
            const double xv = x[n * features + f];
            for (std::size_t c = 0; c < classes; ++c)
                row[c] += xv * dy[n * classes + c];
        }
    }
    for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t c = 0; c < classes; ++c)
            g.bias[c] += dy[n * classes + c];

    if (need_input_grad) {
        g.input = Tensor4(input.dims());
        double* dx = g.input.data();
#pragma omp parallel for schedule(static)
        for (std::int64_t n = 0; n < static_cast<std::int64_t>(batch); ++n) {
            for (std::size_t f = 0; f < features; ++f) {
                const double* w = weights.data() + f * classes;
                double acc = 0.0;
                for (std::size_t c = 0; c < classes; ++c)
                    acc += w[c] * dy[n * classes + c];
                dx[n * features + f] = acc;
            }
        }
    }
    return g;
}

} // namespace kernels
} // namespace gescl
