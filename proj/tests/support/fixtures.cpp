// SPDX-License-Identifier: Apache-2.0
#include "fixtures.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace gescl::testing {

Tensor4 random_tensor(Dims4 dims, std::uint64_t seed, double lo, double hi)
{
    Tensor4 t(dims);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& v : t.values())
        v = u(rng);
    return t;
}

std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo, double hi)
{
    std::vector<double> out(n);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& v : out)
        v = u(rng);
    return out;
}

LabeledSet random_set(std::size_t n, Dims4 image_dims, std::size_t classes, std::uint64_t seed)
{
    LabeledSet s;
    s.images = random_tensor({n, image_dims[1], image_dims[2], image_dims[3]}, seed);
    std::mt19937_64 rng(seed ^ 0x5bd1e995u);
    std::uniform_int_distribution<std::size_t> label(0, classes - 1);
    for (std::size_t i = 0; i < n; ++i)
        s.labels.push_back(label(rng));
    return s;
}

ArchitectureSpec tiny_arch()
{
    ArchitectureSpec a;
    a.height = 8;
    a.width = 8;
    a.channels = 2;
    a.blocks = {{3, 3}, {3, 4}};
    return a;
}

StreamSpec tiny_stream_spec(std::size_t tasks, std::uint64_t seed, std::size_t train_per_class,
                            std::size_t test_per_class)
{
    StreamSpec s;
    s.synthetic.classes = 2 * tasks;
    s.synthetic.height = 12;
    s.synthetic.width = 12;
    s.synthetic.channels = 1;
    s.synthetic.train_per_class = train_per_class;
    s.synthetic.test_per_class = test_per_class;
    s.synthetic.seed = seed;
    s.classes_per_task = 2;
    return s;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b)
{
    if (a.size() != b.size())
        return std::numeric_limits<double>::infinity();
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double max_abs_diff(const Tensor4& a, const Tensor4& b)
{
    if (a.dims() != b.dims())
        return std::numeric_limits<double>::infinity();
    return max_abs_diff(std::vector<double>(a.values().begin(), a.values().end()),
                        std::vector<double>(b.values().begin(), b.values().end()));
}

double relative_l2(const std::vector<double>& a, const std::vector<double>& b)
{
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

} // namespace gescl::testing

#include "gescl/kernels.hpp"
#include "gescl/regularization.hpp"
#include "gescl/tape.hpp"

namespace gescl::testing {

std::vector<double> analytic_gradient(const MultiHeadNetwork& net, const LabeledSet& data, std::size_t head)
{
    ForwardPass fp = forward(net, data.images, head);
    const std::size_t classes = fp.logits.dim(3);
    Tensor4 grad(fp.logits.dims());
    for (std::size_t n = 0; n < data.size(); ++n) {
        const auto lg = softmax_cross_entropy({fp.logits.data() + n * classes, classes}, data.labels[n]);
        for (std::size_t c = 0; c < classes; ++c)
            grad.data()[n * classes + c] = lg.grad[c] / static_cast<double>(data.size());
    }
    return backward(fp.tape, grad).flatten();
}

GradCheckResult finite_difference_check(MultiHeadNetwork& net, const LabeledSet& data, std::size_t head, double h)
{
    const std::vector<double> analytic = analytic_gradient(net, data, head);
    std::vector<double*> params;
    for (std::size_t i = 0; i < net.num_layers(); ++i) {
        for (auto& v : net.layer(i).kernel.values())
            params.push_back(&v);
        for (auto& v : net.layer(i).bias)
            params.push_back(&v);
    }
    for (auto& v : net.head(head).weights)
        params.push_back(&v);
    for (auto& v : net.head(head).bias)
        params.push_back(&v);
    GradCheckResult r;
    r.parameters = params.size();
    if (params.size() != analytic.size())
        throw std::runtime_error("gradient length does not match parameter count");
    for (std::size_t p = 0; p < params.size(); ++p) {
        const double saved = *params[p];
        *params[p] = saved + h;
        const double up = mean_cross_entropy(net, data, head);
        *params[p] = saved - h;
        const double down = mean_cross_entropy(net, data, head);
        *params[p] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double rel = std::abs(analytic[p] - numeric) / (std::abs(numeric) + 1e-8);
        if (rel > r.max_rel_error) {
            r.max_rel_error = rel;
            r.worst_index = p;
        }
    }
    return r;
}

} // namespace gescl::testing
