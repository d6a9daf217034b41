// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <utility>
#include <vector>

namespace gescl {

/// accuracy(t, k): accuracy on the test split of task k after training
/// through task t. Indices are 0-based; only k <= t is stored.
class MetricsMatrix {
public:
    MetricsMatrix() = default;
    explicit MetricsMatrix(std::size_t tasks);

    std::size_t num_tasks() const noexcept { return rows_.size(); }
    /// Throws InputError for k > t, t out of range, or a value outside [0, 1].
    void set(std::size_t after_task, std::size_t task, double accuracy);
    std::optional<double> get(std::size_t after_task, std::size_t task) const;
    /// Throws StateError for a missing entry.
    double at(std::size_t after_task, std::size_t task) const;
    bool row_complete(std::size_t after_task) const;
    /// Number of leading rows that are fully populated.
    std::size_t completed_rows() const;

    friend bool operator==(const MetricsMatrix&, const MetricsMatrix&) = default;

private:
    std::vector<std::vector<std::optional<double>>> rows_;
};

/// Mean of row `after_task`. Throws StateError when the row is incomplete.
double average_accuracy(const MetricsMatrix& m, std::size_t after_task);

/// Mean over every task but the last of (peak accuracy - final accuracy).
/// Throws StateError for fewer than two tasks or an incomplete triangle.
double average_forgetting(const MetricsMatrix& m);

/// (after_task, accuracy) for every populated entry of column `task`.
std::vector<std::pair<std::size_t, double>> retention_curve(const MetricsMatrix& m, std::size_t task);

} // namespace gescl
