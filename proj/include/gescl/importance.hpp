// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gescl/data.hpp"
#include "gescl/model.hpp"
#include "gescl/partition.hpp"

#include <cstdint>
#include <vector>

namespace gescl {

/// Streaming per-cell statistics of post-ReLU conv outputs (before pooling).
///
/// Sums are taken around a per-cell shift (the first sample seen), so an
/// activation that never changes yields a variance of exactly zero.
struct ActivationStats {
    struct Layer {
        std::size_t height = 0;
        std::size_t width = 0;
        std::size_t filters = 0;
        std::vector<double> shift;   ///< (cell, filter) layout, like one NHWC sample
        std::vector<double> sum;
        std::vector<double> sum_sq;
    };

    std::size_t count = 0;
    std::vector<Layer> layers;

    /// Adds every sample of a batch of trunk activations.
    void add(const std::vector<Tensor4>& activations);
    /// Population standard deviation per (cell, filter) of one layer.
    std::vector<double> sigma(std::size_t layer) const;
};

/// Runs the trunk over `data` in batches and accumulates activation statistics.
/// Throws InputError for an empty set.
ActivationStats collect_stats(const MultiHeadNetwork& net, const LabeledSet& data, std::size_t batch_size = 64);

/// Mean over spatial cells of the per-cell standard deviation, per filter.
PerFilter<double> filter_importance(const ActivationStats& stats);

/// Importance carried across tasks.
struct ImportanceState {
    double nu = 1.0;
    double epsilon = 1e-8;
    PerFilter<double> current;      ///< importance measured on the latest task
    PerFilter<double> accumulated;  ///< decayed running sum

    static ImportanceState initial(const std::vector<std::size_t>& filters_per_layer, double nu, double epsilon);
    friend bool operator==(const ImportanceState&, const ImportanceState&) = default;
};

/// accumulated = nu * accumulated + current_task. Throws ShapeError on a
/// layer or filter count mismatch.
void accumulate_importance(ImportanceState& state, const PerFilter<double>& current_task);

/// A filter is important when its accumulated importance exceeds epsilon.
FilterPartition binarize(const ImportanceState& state);

struct PruneReport {
    struct Layer {
        std::size_t pruned = 0;
        std::size_t kept = 0;
        double sparsity = 0.0;  ///< pruned / filters
    };
    std::size_t task = 0;
    std::vector<Layer> layers;
};

/// Reinitializes every unimportant filter (He-uniform kernel, zero bias) and
/// severs its output: input channel j of layer i + 1 is zeroed, or for the
/// last conv layer every head weight row reading channel j. Logits of heads
/// whose inputs only depend on important filters are unchanged.
PruneReport prune_and_reinit(MultiHeadNetwork& net, const FilterPartition& partition, std::uint64_t seed,
                             std::size_t task);

} // namespace gescl
