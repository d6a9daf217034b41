// SPDX-License-Identifier: Apache-2.0
#include "gescl/importance.hpp"

#include "gescl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <omp.h>

namespace gescl {

void ActivationStats::add(const std::vector<Tensor4>& activations)
{
    if (activations.empty())
        return;
    if (layers.empty()) {
        for (const auto& a : activations) {
            Layer l;
            l.height = a.dim(1);
            l.width = a.dim(2);
            l.filters = a.dim(3);
            const std::size_t n = a.stride0();
            l.shift.assign(a.data(), a.data() + n);
            l.sum.assign(n, 0.0);
            l.sum_sq.assign(n, 0.0);
            layers.push_back(std::move(l));
        }
    }
    if (activations.size() != layers.size())
        throw ShapeError("activation layer count changed between batches");
    const std::size_t batch = activations.front().dim(0);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        Layer& l = layers[i];
        const Tensor4& a = activations[i];
        const std::size_t cells = l.shift.size();
        if (a.stride0() != cells || a.dim(0) != batch)
            throw ShapeError("activation shape changed between batches");
#pragma omp parallel for schedule(static)
        for (std::size_t c = 0; c < cells; ++c) {
            double s = l.sum[c];
            double q = l.sum_sq[c];
            for (std::size_t n = 0; n < batch; ++n) {
                const double d = a.data()[n * cells + c] - l.shift[c];
                s += d;
                q += d * d;
            }
            l.sum[c] = s;
            l.sum_sq[c] = q;
        }
    }
    count += batch;
}

std::vector<double> ActivationStats::sigma(std::size_t layer) const
{
    const Layer& l = layers.at(layer);
    if (count == 0)
        throw StateError("no samples accumulated");
    const double inv = 1.0 / static_cast<double>(count);
    std::vector<double> out(l.sum.size());
    for (std::size_t c = 0; c < out.size(); ++c) {
        const double mean = l.sum[c] * inv;
        out[c] = std::sqrt(std::max(0.0, l.sum_sq[c] * inv - mean * mean));
    }
    return out;
}

ActivationStats collect_stats(const MultiHeadNetwork& net, const LabeledSet& data, std::size_t batch_size)
{
    if (data.empty())
        throw InputError("collect_stats needs at least one sample");
    if (batch_size == 0)
        throw InputError("batch_size must be positive");
    ActivationStats stats;
    for (std::size_t b = 0; b < data.size(); b += batch_size) {
        const LabeledSet chunk = data.slice(b, std::min(data.size(), b + batch_size));
        stats.add(trunk_activations(net, chunk.images));
    }
    return stats;
}

PerFilter<double> filter_importance(const ActivationStats& stats)
{
    PerFilter<double> out;
    for (std::size_t i = 0; i < stats.layers.size(); ++i) {
        const auto& l = stats.layers[i];
        const std::vector<double> sd = stats.sigma(i);
        const std::size_t cells = l.height * l.width;
        std::vector<double> gamma(l.filters, 0.0);
        for (std::size_t c = 0; c < cells; ++c)
            for (std::size_t j = 0; j < l.filters; ++j)
                gamma[j] += sd[c * l.filters + j];
        for (auto& g : gamma)
            g /= static_cast<double>(cells);
        out.push_back(std::move(gamma));
    }
    return out;
}

ImportanceState ImportanceState::initial(const std::vector<std::size_t>& filters_per_layer, double nu,
                                         double epsilon)
{
    ImportanceState s;
    s.nu = nu;
    s.epsilon = epsilon;
    for (auto f : filters_per_layer) {
        s.current.emplace_back(f, 0.0);
        s.accumulated.emplace_back(f, 0.0);
    }
    return s;
}

void accumulate_importance(ImportanceState& state, const PerFilter<double>& current_task)
{
    if (current_task.size() != state.accumulated.size())
        throw ShapeError("importance has " + std::to_string(current_task.size()) + " layers, state has " +
                         std::to_string(state.accumulated.size()));
    for (std::size_t i = 0; i < current_task.size(); ++i)
        if (current_task[i].size() != state.accumulated[i].size())
            throw ShapeError("importance filter count mismatch in layer " + std::to_string(i));
    for (std::size_t i = 0; i < current_task.size(); ++i)
        for (std::size_t j = 0; j < current_task[i].size(); ++j)
            state.accumulated[i][j] = state.nu * state.accumulated[i][j] + current_task[i][j];
    state.current = current_task;
}

FilterPartition binarize(const ImportanceState& state)
{
    PerFilter<bool> mask;
    for (const auto& layer : state.accumulated) {
        std::vector<bool> m(layer.size());
        for (std::size_t j = 0; j < layer.size(); ++j)
            m[j] = layer[j] > state.epsilon;
        mask.push_back(std::move(m));
    }
    return FilterPartition(std::move(mask));
}

namespace {
constexpr std::uint32_t kReinitStream = 2;
}

PruneReport prune_and_reinit(MultiHeadNetwork& net, const FilterPartition& partition, std::uint64_t seed,
                             std::size_t task)
{
    const auto fpl = net.filters_per_layer();
    if (partition.num_layers() != fpl.size())
        throw ShapeError("partition layer count does not match the network");
    for (std::size_t i = 0; i < fpl.size(); ++i)
        if (partition.filters_in_layer(i) != fpl[i])
            throw ShapeError("partition filter count mismatch in layer " + std::to_string(i));

    PruneReport report;
    report.task = task;
    const auto pruned = partition.unimportant();
    for (const FilterId id : pruned) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), kReinitStream,
                          static_cast<std::uint32_t>(task), static_cast<std::uint32_t>(id.layer),
                          static_cast<std::uint32_t>(id.filter)};
        HeUniform init(seq);
        FilterGroup g = net.filter_group(id);
        for (std::size_t e = 0; e < g.kernel_length(); ++e)
            g.kernel(e) = init(g.kernel_length());
        g.bias() = 0.0;
    }
    const std::size_t last = fpl.size() - 1;
    for (const FilterId id : pruned) {
        if (id.layer < last) {
            net.next_layer_channel(id.layer, id.filter).zero();
            continue;
        }
        const std::size_t channels = fpl[last];
        for (std::size_t h = 0; h < net.num_heads(); ++h) {
            HeadParams& head = net.head(h);
            for (std::size_t f = id.filter; f < head.features; f += channels)
                std::fill_n(head.weights.begin() + static_cast<std::ptrdiff_t>(f * head.classes), head.classes, 0.0);
        }
    }
    for (std::size_t i = 0; i < fpl.size(); ++i) {
        PruneReport::Layer l;
        l.kept = 0;
        for (std::size_t j = 0; j < fpl[i]; ++j)
            l.kept += partition.is_important({i, j}) ? 1 : 0;
        l.pruned = fpl[i] - l.kept;
        l.sparsity = static_cast<double>(l.pruned) / static_cast<double>(fpl[i]);
        report.layers.push_back(l);
    }
    return report;
}

} // namespace gescl
