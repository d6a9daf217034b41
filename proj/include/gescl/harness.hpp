// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gescl/data.hpp"
#include "gescl/importance.hpp"
#include "gescl/metrics.hpp"
#include "gescl/model.hpp"
#include "gescl/pgd.hpp"
#include "gescl/regularization.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace gescl {

/// Argmax-logit accuracy of `head` over `test` (first maximum wins ties).
/// Throws InputError for an empty set.
double evaluate(const MultiHeadNetwork& net, const LabeledSet& test, std::size_t head, std::size_t batch_size = 256);

struct ExperimentOptions {
    /// Empty: nothing is written.
    std::filesystem::path output_dir;
    bool write_checkpoints = true;
    std::size_t stats_batch = 64;
    std::size_t eval_batch = 256;
    /// Called after every step with its name, the task index and the network.
    std::function<void(std::string_view, std::size_t, const MultiHeadNetwork&)> after_step;
};

struct ExperimentResult {
    MetricsMatrix metrics;
    std::vector<EpochRecord> log;
    std::vector<PruneReport> prunes;
    /// Step names in execution order, e.g. "train_task:0".
    std::vector<std::string> events;
    MultiHeadNetwork network;
    ImportanceState importance;
    std::vector<FilterPartition> partitions;  ///< one per task, after binarize
};

/// Input geometry from the stream with the blocks of `blocks_from`.
ArchitectureSpec fit_architecture(const ArchitectureSpec& blocks_from, const TaskStream& stream);

/// Trains the tasks of `stream` in order. Each task: add head, train, collect
/// activation statistics, update importance, binarize, release the training
/// split, evaluate every task so far, prune and reinitialize, capture anchors,
/// checkpoint. Releases every training split of `stream`.
ExperimentResult run_experiment(TaskStream& stream, const ArchitectureSpec& arch, const RegularizerConfig& reg,
                                const OptimizerConfig& opt, std::uint64_t seed,
                                const ExperimentOptions& options = {});

/// metrics.json: accuracy rows, average accuracy per task, average forgetting
/// (null for a single task).
std::string metrics_json(const MetricsMatrix& m);
MetricsMatrix parse_metrics_json(const std::string& text);

/// Writes metrics.json and retention_task<k>.csv into `dir`.
void write_metrics(const std::filesystem::path& dir, const MetricsMatrix& m);
/// retention_task<k>.csv for every task plus average_accuracy.csv, all
/// derived from the accuracy rows stored in metrics.json.
void write_plot_csvs(const std::filesystem::path& dir, const MetricsMatrix& m);

/// Formats a double with 17 significant digits.
std::string format_number(double v);

} // namespace gescl
