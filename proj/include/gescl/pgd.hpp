// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gescl/data.hpp"
#include "gescl/importance.hpp"
#include "gescl/model.hpp"
#include "gescl/partition.hpp"
#include "gescl/regularization.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace gescl {

struct OptimizerConfig {
    double alpha = 0.01;
    std::size_t epochs = 1;
    std::size_t batch_size = 32;
    bool clip_prox = true;
    std::uint64_t seed = 0;  ///< shuffling seed

    /// Throws ConfigError naming the first invalid field.
    void validate() const;
    friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

struct ProxStepReport {
    FilterId id;
    bool stability = false;  ///< which of the two updates ran
    double beta = 0.0;
    double xi = 0.0;
    double eta = 0.0;
    bool clipped = false;
    bool zeroed = false;     ///< every kernel entry is zero afterwards
};

/// Pulls `filter` toward `anchor`: beta = alpha * mu_s * gamma_hat / ||filter - anchor||_2,
/// filter <- (1 - beta) * filter + beta * anchor. With `clip`, beta >= 1 (or a
/// distance below 1e-12) copies the anchor exactly.
ProxStepReport prox_stability(std::span<double> filter, std::span<const double> anchor, double gamma_hat,
                              double alpha, double mu_s, bool clip);

/// Group shrink of the whole filter by xi = alpha * mu_p * psi / ||filter||_2,
/// then exclusive shrink of the first `kernel_length` entries by
/// eta = alpha * mu_p * (1 - psi) * ||kernel||_1. With `clip`, xi >= 1 zeroes
/// the filter and the exclusive shrink stops entries at zero; without it the
/// literal update (1 - xi) * v - eta * sign(v) is applied.
ProxStepReport prox_plasticity(std::span<double> filter, std::size_t kernel_length, double psi, double alpha,
                               double mu_p, bool clip);

ProxStepReport prox_stability_filter(FilterGroup& group, std::span<const double> anchor, double gamma_hat,
                                     const RegularizerConfig& reg, const OptimizerConfig& opt);
ProxStepReport prox_plasticity_filter(FilterGroup& group, double psi_i, const RegularizerConfig& reg,
                                      const OptimizerConfig& opt);

/// Sample order for one epoch; a pure function of (seed, task, epoch).
std::vector<std::size_t> epoch_order(std::size_t samples, std::uint64_t seed, std::size_t task, std::size_t epoch);

/// theta <- theta - alpha * grad for the trunk and the head the gradients belong to.
void apply_gradients(MultiHeadNetwork& net, const NetworkGradients& grads, double alpha);

/// One shuffled pass of mini-batch SGD on mean cross-entropy. Returns the mean
/// of the batch losses. Throws InputError for empty data and StateError for a
/// frozen head.
double sgd_epoch(MultiHeadNetwork& net, const LabeledSet& data, std::size_t head, const OptimizerConfig& opt,
                 std::size_t task, std::size_t epoch);

/// Prox step on every filter: stability for important filters, plasticity for
/// the rest. Reports are in (layer, filter) order.
std::vector<ProxStepReport> apply_prox(MultiHeadNetwork& net, const AnchorStore& anchors,
                                       const ImportanceState& importance, const FilterPartition& partition,
                                       const RegularizerConfig& reg, const OptimizerConfig& opt);

struct EpochRecord {
    std::size_t task = 0;
    std::size_t epoch = 0;
    double ce_loss = 0.0;          ///< mean mini-batch loss during the epoch
    double stab_penalty = 0.0;     ///< after the prox step
    double plast_penalty = 0.0;    ///< after the prox step
    std::size_t clipped_filters = 0;
    std::size_t zeroed_filters = 0;
    std::vector<ProxStepReport> prox;
};

/// Trains the newest head on one task: for each epoch an SGD pass followed by
/// the prox step.
std::vector<EpochRecord> train_task(MultiHeadNetwork& net, const LabeledSet& data, std::size_t head,
                                    std::size_t task, const AnchorStore& anchors, const ImportanceState& importance,
                                    const FilterPartition& partition, const RegularizerConfig& reg,
                                    const OptimizerConfig& opt);

} // namespace gescl
