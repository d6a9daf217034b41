// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gescl/data.hpp"
#include "gescl/importance.hpp"
#include "gescl/model.hpp"
#include "gescl/partition.hpp"

#include <optional>
#include <vector>

namespace gescl {

struct RegularizerConfig {
    double mu_s = 0.0;      ///< stability strength
    double mu_p = 0.0;      ///< plasticity strength
    double nu = 1.0;        ///< importance decay
    double epsilon = 1e-8;  ///< importance threshold

    /// Throws ConfigError naming the first invalid field.
    void validate() const;
    friend bool operator==(const RegularizerConfig&, const RegularizerConfig&) = default;
};

/// Snapshot of the important filters (kernel entries then bias) taken at the
/// end of a task; the anchors the stability term pulls towards.
class AnchorStore {
public:
    AnchorStore() = default;
    static AnchorStore capture(const MultiHeadNetwork& net, const FilterPartition& partition, std::size_t task);

    bool has(FilterId id) const;
    /// Throws StateError when no anchor was captured for `id`.
    const std::vector<double>& values(FilterId id) const;
    std::size_t task() const noexcept { return task_; }
    std::size_t size() const noexcept;

    friend bool operator==(const AnchorStore&, const AnchorStore&) = default;

private:
    std::size_t task_ = 0;
    PerFilter<std::optional<std::vector<double>>> anchors_;
};

/// Layer weighting between the group term and the exclusive term:
/// 1 - layer / (layers - 1), so 1 for the first layer and 0 for the last.
/// Throws ConfigError for layers < 2 and InputError for layer >= layers.
double psi(std::size_t layer, std::size_t layers);

/// sum over important filters of accumulated importance * ||F - anchor||_2.
/// Throws StateError when an important filter has no anchor.
double stability_penalty(const MultiHeadNetwork& net, const AnchorStore& anchors, const ImportanceState& importance,
                         const FilterPartition& partition);

/// sum over unimportant filters of psi * ||F||_2 + (1 - psi) / 2 * ||kernel||_1^2.
/// ||F||_2 covers kernel entries and bias; the L1 term covers the kernel only.
double plasticity_penalty(const MultiHeadNetwork& net, const FilterPartition& partition);

/// Mean softmax cross-entropy of `head` over `data`.
double mean_cross_entropy(const MultiHeadNetwork& net, const LabeledSet& data, std::size_t head,
                          std::size_t batch_size = 256);

struct ObjectiveBreakdown {
    double cross_entropy = 0.0;
    double stability = 0.0;   ///< unweighted penalty
    double plasticity = 0.0;  ///< unweighted penalty
    double mu_s = 0.0;
    double mu_p = 0.0;

    double total() const noexcept { return cross_entropy + mu_s * stability + mu_p * plasticity; }
};

ObjectiveBreakdown total_objective(const MultiHeadNetwork& net, const LabeledSet& data, std::size_t head,
                                   const AnchorStore& anchors, const ImportanceState& importance,
                                   const FilterPartition& partition, const RegularizerConfig& config);

} // namespace gescl
