// SPDX-License-Identifier: Apache-2.0
#include "gescl/regularization.hpp"

#include "gescl/errors.hpp"
#include "gescl/kernels.hpp"

#include <cmath>
#include <string>

namespace gescl {

void RegularizerConfig::validate() const
{
    auto check = [](double v, const char* name) {
        if (!std::isfinite(v) || v < 0.0)
            throw ConfigError(std::string("regularization.") + name + " must be a finite value >= 0");
    };
    check(mu_s, "mu_s");
    check(mu_p, "mu_p");
    check(nu, "nu");
    check(epsilon, "epsilon");
}

AnchorStore AnchorStore::capture(const MultiHeadNetwork& net, const FilterPartition& partition, std::size_t task)
{
    const auto fpl = net.filters_per_layer();
    if (partition.num_layers() != fpl.size())
        throw ShapeError("partition layer count does not match the network");
    AnchorStore store;
    store.task_ = task;
    for (std::size_t i = 0; i < fpl.size(); ++i) {
        if (partition.filters_in_layer(i) != fpl[i])
            throw ShapeError("partition filter count mismatch in layer " + std::to_string(i));
        std::vector<std::optional<std::vector<double>>> layer(fpl[i]);
        for (std::size_t j = 0; j < fpl[i]; ++j)
            if (partition.is_important({i, j}))
                layer[j] = filter_values(net.layer(i), j);
        store.anchors_.push_back(std::move(layer));
    }
    return store;
}

bool AnchorStore::has(FilterId id) const
{
    return id.layer < anchors_.size() && id.filter < anchors_[id.layer].size() &&
           anchors_[id.layer][id.filter].has_value();
}

const std::vector<double>& AnchorStore::values(FilterId id) const
{
    if (!has(id))
        throw StateError("no anchor for filter (" + std::to_string(id.layer) + ", " + std::to_string(id.filter) + ")");
    return *anchors_[id.layer][id.filter];
}

std::size_t AnchorStore::size() const noexcept
{
    std::size_t n = 0;
    for (const auto& l : anchors_)
        for (const auto& a : l)
            n += a.has_value() ? 1 : 0;
    return n;
}

double psi(std::size_t layer, std::size_t layers)
{
    if (layers < 2)
        throw ConfigError("psi needs at least two layers");
    if (layer >= layers)
        throw InputError("layer " + std::to_string(layer) + " out of range for " + std::to_string(layers) + " layers");
    return 1.0 - static_cast<double>(layer) / static_cast<double>(layers - 1);
}

double stability_penalty(const MultiHeadNetwork& net, const AnchorStore& anchors, const ImportanceState& importance,
                         const FilterPartition& partition)
{
    double total = 0.0;
    for (const FilterId id : partition.important()) {
        const auto& anchor = anchors.values(id);
        const auto f = filter_values(net.layer(id.layer), id.filter);
        if (anchor.size() != f.size())
            throw StateError("anchor for filter (" + std::to_string(id.layer) + ", " + std::to_string(id.filter) +
                             ") does not match the network");
        double sq = 0.0;
        for (std::size_t e = 0; e < f.size(); ++e)
            sq += (f[e] - anchor[e]) * (f[e] - anchor[e]);
        total += importance.accumulated.at(id.layer).at(id.filter) * std::sqrt(sq);
    }
    return total;
}

double plasticity_penalty(const MultiHeadNetwork& net, const FilterPartition& partition)
{
    double total = 0.0;
    const std::size_t layers = net.num_layers();
    for (const FilterId id : partition.unimportant()) {
        const auto f = filter_values(net.layer(id.layer), id.filter);
        const std::size_t k = f.size() - 1;
        double sq = 0.0, l1 = 0.0;
        for (std::size_t e = 0; e < f.size(); ++e)
            sq += f[e] * f[e];
        for (std::size_t e = 0; e < k; ++e)
            l1 += std::abs(f[e]);
        const double w = psi(id.layer, layers);
        total += w * std::sqrt(sq) + 0.5 * (1.0 - w) * l1 * l1;
    }
    return total;
}

double mean_cross_entropy(const MultiHeadNetwork& net, const LabeledSet& data, std::size_t head,
                          std::size_t batch_size)
{
    if (data.empty())
        throw InputError("cross-entropy over an empty set");
    double total = 0.0;
    for (std::size_t b = 0; b < data.size(); b += batch_size) {
        const LabeledSet chunk = data.slice(b, std::min(data.size(), b + batch_size));
        const ForwardPass fp = forward(net, chunk.images, head, {.record_tape = false});
        const std::size_t classes = fp.logits.dim(3);
        for (std::size_t n = 0; n < chunk.size(); ++n)
            total += softmax_cross_entropy({fp.logits.data() + n * classes, classes}, chunk.labels[n]).loss;
    }
    return total / static_cast<double>(data.size());
}

ObjectiveBreakdown total_objective(const MultiHeadNetwork& net, const LabeledSet& data, std::size_t head,
                                   const AnchorStore& anchors, const ImportanceState& importance,
                                   const FilterPartition& partition, const RegularizerConfig& config)
{
    ObjectiveBreakdown out;
    out.cross_entropy = mean_cross_entropy(net, data, head);
    out.stability = stability_penalty(net, anchors, importance, partition);
    out.plasticity = plasticity_penalty(net, partition);
    out.mu_s = config.mu_s;
    out.mu_p = config.mu_p;
    return out;
}

} // namespace gescl
