// SPDX-License-Identifier: Apache-2.0
#include "gescl/pgd.hpp"

#include "gescl/errors.hpp"
#include "gescl/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace gescl {

namespace {
constexpr double kTiny = 1e-12;
constexpr std::uint32_t kShuffleStream = 3;
} // namespace

void OptimizerConfig::validate() const
{
    if (!std::isfinite(alpha) || alpha <= 0.0)
        throw ConfigError("optimizer.alpha must be a finite value > 0");
    if (epochs == 0)
        throw ConfigError("optimizer.epochs must be >= 1");
    if (batch_size == 0)
        throw ConfigError("optimizer.batch_size must be >= 1");
}

ProxStepReport prox_stability(std::span<double> filter, std::span<const double> anchor, double gamma_hat,
                              double alpha, double mu_s, bool clip)
{
    if (filter.size() != anchor.size())
        throw ShapeError("anchor length does not match filter");
    ProxStepReport r;
    r.stability = true;
    const double strength = alpha * mu_s * gamma_hat;
    if (strength <= 0.0)
        return r;
    double sq = 0.0;
    for (std::size_t e = 0; e < filter.size(); ++e)
        sq += (filter[e] - anchor[e]) * (filter[e] - anchor[e]);
    const double dist = std::sqrt(sq);
    const double beta = dist < kTiny ? 1.0 : strength / dist;
    if (clip && beta >= 1.0) {
        std::copy(anchor.begin(), anchor.end(), filter.begin());
        r.beta = 1.0;
        r.clipped = true;
    } else {
        for (std::size_t e = 0; e < filter.size(); ++e)
            filter[e] = (1.0 - beta) * filter[e] + beta * anchor[e];
        r.beta = beta;
    }
    return r;
}

ProxStepReport prox_plasticity(std::span<double> filter, std::size_t kernel_length, double psi, double alpha,
                               double mu_p, bool clip)
{
    if (kernel_length > filter.size())
        throw ShapeError("kernel length exceeds filter length");
    ProxStepReport r;
    const double strength = alpha * mu_p;
    auto kernel_zero = [&] {
        return std::all_of(filter.begin(), filter.begin() + static_cast<std::ptrdiff_t>(kernel_length),
                           [](double v) { return v == 0.0; });
    };
    if (strength <= 0.0) {
        r.zeroed = kernel_zero();
        return r;
    }
    double sq = 0.0, l1 = 0.0;
    for (double v : filter)
        sq += v * v;
    for (std::size_t e = 0; e < kernel_length; ++e)
        l1 += std::abs(filter[e]);
    const double norm = std::sqrt(sq);
    r.eta = strength * (1.0 - psi) * l1;
    if (norm < kTiny) {
        std::fill(filter.begin(), filter.end(), 0.0);
        r.xi = 1.0;
        r.clipped = true;
        r.zeroed = true;
        return r;
    }
    const double xi = strength * psi / norm;
    if (clip && xi >= 1.0) {
        std::fill(filter.begin(), filter.end(), 0.0);
        r.xi = 1.0;
        r.clipped = true;
        r.zeroed = true;
        return r;
    }
    r.xi = xi;
    for (std::size_t e = 0; e < filter.size(); ++e) {
        const double v = (1.0 - xi) * filter[e];
        if (e >= kernel_length) {
            filter[e] = v;
        } else if (clip) {
            const double mag = std::abs(v) - r.eta;
            filter[e] = mag > 0.0 ? std::copysign(mag, v) : 0.0;
        } else {
            const double s = filter[e] > 0.0 ? 1.0 : (filter[e] < 0.0 ? -1.0 : 0.0);
            filter[e] = v - r.eta * s;
        }
    }
    r.zeroed = kernel_zero();
    return r;
}

ProxStepReport prox_stability_filter(FilterGroup& group, std::span<const double> anchor, double gamma_hat,
                                     const RegularizerConfig& reg, const OptimizerConfig& opt)
{
    std::vector<double> v = group.values();
    ProxStepReport r = prox_stability(v, anchor, gamma_hat, opt.alpha, reg.mu_s, opt.clip_prox);
    group.assign(v);
    r.id = group.id();
    return r;
}

ProxStepReport prox_plasticity_filter(FilterGroup& group, double psi_i, const RegularizerConfig& reg,
                                      const OptimizerConfig& opt)
{
    std::vector<double> v = group.values();
    ProxStepReport r = prox_plasticity(v, group.kernel_length(), psi_i, opt.alpha, reg.mu_p, opt.clip_prox);
    group.assign(v);
    r.id = group.id();
    return r;
}

std::vector<std::size_t> epoch_order(std::size_t samples, std::uint64_t seed, std::size_t task, std::size_t epoch)
{
    std::vector<std::size_t> order(samples);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), kShuffleStream,
                      static_cast<std::uint32_t>(task), static_cast<std::uint32_t>(epoch)};
    std::mt19937_64 rng(seq);
    // Fisher-Yates with an explicit draw so the order is the same on every
    // standard library.
    for (std::size_t i = samples; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

void apply_gradients(MultiHeadNetwork& net, const NetworkGradients& grads, double alpha)
{
    if (grads.kernels.size() != net.num_layers() || grads.biases.size() != net.num_layers())
        throw ShapeError("gradient layer count does not match the network");
    for (std::size_t i = 0; i < net.num_layers(); ++i) {
        LayerParams& l = net.layer(i);
        if (grads.kernels[i].dims() != l.kernel.dims() || grads.biases[i].size() != l.bias.size())
            throw ShapeError("gradient shape mismatch in layer " + std::to_string(i));
        auto k = l.kernel.values();
        const auto g = grads.kernels[i].values();
        for (std::size_t e = 0; e < k.size(); ++e)
            k[e] -= alpha * g[e];
        for (std::size_t j = 0; j < l.bias.size(); ++j)
            l.bias[j] -= alpha * grads.biases[i][j];
    }
    HeadParams& h = net.head(grads.head);
    if (h.frozen)
        throw StateError("head " + std::to_string(grads.head) + " is frozen");
    if (grads.head_weights.size() != h.weights.size() || grads.head_bias.size() != h.bias.size())
        throw ShapeError("head gradient shape mismatch");
    for (std::size_t e = 0; e < h.weights.size(); ++e)
        h.weights[e] -= alpha * grads.head_weights[e];
    for (std::size_t c = 0; c < h.bias.size(); ++c)
        h.bias[c] -= alpha * grads.head_bias[c];
}

double sgd_epoch(MultiHeadNetwork& net, const LabeledSet& data, std::size_t head, const OptimizerConfig& opt,
                 std::size_t task, std::size_t epoch)
{
    if (data.empty())
        throw InputError("sgd_epoch needs at least one sample");
    if (opt.batch_size == 0)
        throw ConfigError("optimizer.batch_size must be >= 1");
    if (net.head(head).frozen)
        throw StateError("cannot train frozen head " + std::to_string(head));
    const auto order = epoch_order(data.size(), opt.seed, task, epoch);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += opt.batch_size) {
        const std::size_t end = std::min(order.size(), b + opt.batch_size);
        const LabeledSet batch = data.select(std::span(order).subspan(b, end - b));
        ForwardPass fp = forward(net, batch.images, head);
        const std::size_t classes = fp.logits.dim(3);
        Tensor4 grad(fp.logits.dims());
        const double inv = 1.0 / static_cast<double>(batch.size());
        double loss = 0.0;
        for (std::size_t n = 0; n < batch.size(); ++n) {
            const LossAndGrad lg = softmax_cross_entropy({fp.logits.data() + n * classes, classes}, batch.labels[n]);
            loss += lg.loss;
            for (std::size_t c = 0; c < classes; ++c)
                grad.data()[n * classes + c] = lg.grad[c] * inv;
        }
        const NetworkGradients g = backward(fp.tape, grad);
        apply_gradients(net, g, opt.alpha);
        loss_sum += loss * inv;
        ++batches;
    }
    return loss_sum / static_cast<double>(batches);
}

std::vector<ProxStepReport> apply_prox(MultiHeadNetwork& net, const AnchorStore& anchors,
                                       const ImportanceState& importance, const FilterPartition& partition,
                                       const RegularizerConfig& reg, const OptimizerConfig& opt)
{
    std::vector<FilterGroup> groups = net.filter_groups();
    if (partition.size() != groups.size())
        throw ShapeError("partition does not cover the network's filters");
    const std::size_t layers = net.num_layers();
    std::vector<ProxStepReport> reports(groups.size());
    // Anchors are checked up front so no exception escapes the parallel loop.
    for (const auto& g : groups)
        if (partition.is_important(g.id()))
            (void)anchors.values(g.id());
    const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(groups.size());
#pragma omp parallel for schedule(dynamic, 8)
    for (std::ptrdiff_t k = 0; k < count; ++k) {
        FilterGroup& g = groups[static_cast<std::size_t>(k)];
        const FilterId id = g.id();
        if (partition.is_important(id))
            reports[static_cast<std::size_t>(k)] = prox_stability_filter(
                g, anchors.values(id), importance.accumulated[id.layer][id.filter], reg, opt);
        else
            reports[static_cast<std::size_t>(k)] = prox_plasticity_filter(g, psi(id.layer, layers), reg, opt);
    }
    return reports;
}

std::vector<EpochRecord> train_task(MultiHeadNetwork& net, const LabeledSet& data, std::size_t head,
                                    std::size_t task, const AnchorStore& anchors, const ImportanceState& importance,
                                    const FilterPartition& partition, const RegularizerConfig& reg,
                                    const OptimizerConfig& opt)
{
    opt.validate();
    reg.validate();
    std::vector<EpochRecord> log;
    for (std::size_t k = 0; k < opt.epochs; ++k) {
        EpochRecord rec;
        rec.task = task;
        rec.epoch = k;
        rec.ce_loss = sgd_epoch(net, data, head, opt, task, k);
        rec.prox = apply_prox(net, anchors, importance, partition, reg, opt);
        for (const auto& r : rec.prox) {
            rec.clipped_filters += r.clipped ? 1 : 0;
            rec.zeroed_filters += r.zeroed ? 1 : 0;
        }
        rec.stab_penalty = stability_penalty(net, anchors, importance, partition);
        rec.plast_penalty = plasticity_penalty(net, partition);
        log.push_back(std::move(rec));
    }
    return log;
}

} // namespace gescl
