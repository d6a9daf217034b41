// SPDX-License-Identifier: Apache-2.0
// Serial reference implementations. Straight loops, no blocking, no threads.
#include "gescl/errors.hpp"
#include "gescl/kernels.hpp"

namespace gescl::reference {

namespace {

// Signed input coordinate for output position `o` and kernel tap `k`.
long tap(std::size_t o, std::size_t k, std::size_t ksize)
{
    return static_cast<long>(o) + static_cast<long>(k) - static_cast<long>((ksize - 1) / 2);
}

bool inside(long v, std::size_t extent)
{
    return v >= 0 && v < static_cast<long>(extent);
}

} // namespace

Tensor4 conv2d(const Tensor4& input, const Tensor4& kernel, std::span<const double> bias)
{
    check_conv_shapes(input, kernel, bias);
    const std::size_t N = input.dim(0), H = input.dim(1), W = input.dim(2), C = input.dim(3);
    const std::size_t K = kernel.dim(0), O = kernel.dim(3);
    Tensor4 out({N, H, W, O});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                for (std::size_t o = 0; o < O; ++o) {
                    double acc = bias[o];
                    for (std::size_t ky = 0; ky < K; ++ky)
                        for (std::size_t kx = 0; kx < K; ++kx)
                            for (std::size_t c = 0; c < C; ++c) {
                                const long iy = tap(y, ky, K);
                                const long ix = tap(x, kx, K);
                                if (inside(iy, H) && inside(ix, W))
                                    acc += input(n, iy, ix, c) * kernel(ky, kx, c, o);
                            }
                    out(n, y, x, o) = acc;
                }
    return out;
}

Conv2dGrads conv2d_backward(const Tensor4& input, const Tensor4& kernel, const Tensor4& grad_out,
                            bool need_input_grad)
{
    const std::size_t N = input.dim(0), H = input.dim(1), W = input.dim(2), C = input.dim(3);
    const std::size_t K = kernel.dim(0), O = kernel.dim(3);
    if (grad_out.dims() != Dims4{N, H, W, O})
        throw ShapeError("conv2d_backward: grad_out dims " + to_string(grad_out.dims()));
    Conv2dGrads g;
    g.kernel = Tensor4(kernel.dims());
    g.bias.assign(O, 0.0);
    if (need_input_grad)
        g.input = Tensor4(input.dims());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                for (std::size_t o = 0; o < O; ++o) {
                    const double d = grad_out(n, y, x, o);
                    g.bias[o] += d;
                    for (std::size_t ky = 0; ky < K; ++ky)
                        for (std::size_t kx = 0; kx < K; ++kx)
                            for (std::size_t c = 0; c < C; ++c) {
                                const long iy = tap(y, ky, K);
                                const long ix = tap(x, kx, K);
                                if (!inside(iy, H) || !inside(ix, W))
                                    continue;
                                g.kernel(ky, kx, c, o) += input(n, iy, ix, c) * d;
                                if (need_input_grad)
                                    g.input(n, iy, ix, c) += kernel(ky, kx, c, o) * d;
                            }
                }
    return g;
}

Tensor4 relu(const Tensor4& x)
{
    Tensor4 out(x.dims());
    for (std::size_t i = 0; i < x.size(); ++i)
        out.values()[i] = x.values()[i] > 0.0 ? x.values()[i] : 0.0;
    return out;
}

Tensor4 relu_backward(const Tensor4& output, const Tensor4& grad_out)
{
    Tensor4 out(output.dims());
    for (std::size_t i = 0; i < output.size(); ++i)
        out.values()[i] = output.values()[i] > 0.0 ? grad_out.values()[i] : 0.0;
    return out;
}

PoolResult maxpool2x2(const Tensor4& x)
{
    const std::size_t N = x.dim(0), H = x.dim(1) / 2, W = x.dim(2) / 2, C = x.dim(3);
    PoolResult r;
    r.output = Tensor4({N, H, W, C});
    r.argmax.resize(r.output.size());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t xo = 0; xo < W; ++xo)
                for (std::size_t c = 0; c < C; ++c) {
                    std::size_t best = x.index(n, 2 * y, 2 * xo, c);
                    for (std::size_t i = 0; i < 4; ++i) {
                        const std::size_t idx = x.index(n, 2 * y + i / 2, 2 * xo + i % 2, c);
                        if (x.values()[idx] > x.values()[best])
                            best = idx;
                    }
                    r.output(n, y, xo, c) = x.values()[best];
                    r.argmax[r.output.index(n, y, xo, c)] = static_cast<std::uint32_t>(best);
                }
    return r;
}

Tensor4 maxpool2x2_backward(const Dims4& input_dims, std::span<const std::uint32_t> argmax,
                            const Tensor4& grad_out)
{
    Tensor4 gin(input_dims);
    for (std::size_t i = 0; i < grad_out.size(); ++i)
        gin.values()[argmax[i]] += grad_out.values()[i];
    return gin;
}

Tensor4 dense(const Tensor4& input, std::span<const double> weights, std::span<const double> bias)
{
    const std::size_t N = input.dim(0), F = input.stride0(), C = bias.size();
    if (weights.size() != F * C)
        throw ShapeError("dense: weight count mismatch");
    Tensor4 out({N, 1, 1, C});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            double acc = bias[c];
            for (std::size_t f = 0; f < F; ++f)
                acc += input.values()[n * F + f] * weights[f * C + c];
            out(n, 0, 0, c) = acc;
        }
    return out;
}

DenseGrads dense_backward(const Tensor4& input, std::span<const double> weights, const Tensor4& grad_out,
                          bool need_input_grad)
{
    const std::size_t N = input.dim(0), F = input.stride0(), C = grad_out.dim(3);
    DenseGrads g;
    g.weights.assign(F * C, 0.0);
    g.bias.assign(C, 0.0);
    if (need_input_grad)
        g.input = Tensor4(input.dims());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            const double d = grad_out(n, 0, 0, c);
            g.bias[c] += d;
            for (std::size_t f = 0; f < F; ++f) {
                g.weights[f * C + c] += input.values()[n * F + f] * d;
                if (need_input_grad)
                    g.input.values()[n * F + f] += weights[f * C + c] * d;
            }
        }
    return g;
}

} // namespace gescl::reference
