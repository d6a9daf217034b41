// SPDX-License-Identifier: Apache-2.0
#include "gescl/metrics.hpp"

#include "gescl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gescl {

MetricsMatrix::MetricsMatrix(std::size_t tasks)
{
    for (std::size_t t = 0; t < tasks; ++t)
        rows_.emplace_back(t + 1);
}

void MetricsMatrix::set(std::size_t after_task, std::size_t task, double accuracy)
{
    if (after_task >= rows_.size() || task > after_task)
        throw InputError("accuracy entry (" + std::to_string(after_task) + ", " + std::to_string(task) +
                         ") is outside the lower triangle");
    if (!(accuracy >= 0.0 && accuracy <= 1.0))
        throw InputError("accuracy must lie in [0, 1]");
    rows_[after_task][task] = accuracy;
}

std::optional<double> MetricsMatrix::get(std::size_t after_task, std::size_t task) const
{
    if (after_task >= rows_.size() || task > after_task)
        return std::nullopt;
    return rows_[after_task][task];
}

double MetricsMatrix::at(std::size_t after_task, std::size_t task) const
{
    const auto v = get(after_task, task);
    if (!v)
        throw StateError("missing accuracy entry (" + std::to_string(after_task) + ", " + std::to_string(task) + ")");
    return *v;
}

bool MetricsMatrix::row_complete(std::size_t after_task) const
{
    if (after_task >= rows_.size())
        return false;
    return std::all_of(rows_[after_task].begin(), rows_[after_task].end(), [](const auto& v) { return v.has_value(); });
}

std::size_t MetricsMatrix::completed_rows() const
{
    std::size_t n = 0;
    while (n < rows_.size() && row_complete(n))
        ++n;
    return n;
}

double average_accuracy(const MetricsMatrix& m, std::size_t after_task)
{
    if (!m.row_complete(after_task))
        throw StateError("row " + std::to_string(after_task) + " of the accuracy matrix is incomplete");
    double sum = 0.0;
    for (std::size_t k = 0; k <= after_task; ++k)
        sum += m.at(after_task, k);
    return sum / static_cast<double>(after_task + 1);
}

double average_forgetting(const MetricsMatrix& m)
{
    const std::size_t tasks = m.num_tasks();
    if (tasks < 2)
        throw StateError("forgetting needs at least two tasks");
    if (m.completed_rows() != tasks)
        throw StateError("accuracy matrix is incomplete");
    double sum = 0.0;
    for (std::size_t k = 0; k + 1 < tasks; ++k) {
        double peak = m.at(k, k);
        for (std::size_t t = k + 1; t < tasks; ++t)
            peak = std::max(peak, m.at(t, k));
        sum += peak - m.at(tasks - 1, k);
    }
    return sum / static_cast<double>(tasks - 1);
}

std::vector<std::pair<std::size_t, double>> retention_curve(const MetricsMatrix& m, std::size_t task)
{
    std::vector<std::pair<std::size_t, double>> out;
    for (std::size_t t = task; t < m.num_tasks(); ++t)
        if (const auto v = m.get(t, task))
            out.emplace_back(t, *v);
    return out;
}

} // namespace gescl
