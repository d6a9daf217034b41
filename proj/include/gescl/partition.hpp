// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <compare>
#include <cstddef>
#include <vector>

namespace gescl {

/// Address of one convolution filter: layer i, filter j.
struct FilterId {
    std::size_t layer = 0;
    std::size_t filter = 0;
    auto operator<=>(const FilterId&) const = default;
};

/// Ragged per-layer, per-filter storage.
template <class T>
using PerFilter = std::vector<std::vector<T>>;

/// Split of the trunk filters into an important set (stability-constrained)
/// and an unimportant set (sparsified, later reinitialized).
///
/// Stored as one flag per filter, so the two sets are disjoint and cover the
/// trunk by construction.
class FilterPartition {
public:
    FilterPartition() = default;
    explicit FilterPartition(PerFilter<bool> important);

    /// Every filter unimportant; the partition used before the first task.
    static FilterPartition all_unimportant(const std::vector<std::size_t>& filters_per_layer);
    static FilterPartition all_important(const std::vector<std::size_t>& filters_per_layer);

    bool is_important(FilterId id) const { return important_.at(id.layer).at(id.filter); }
    std::size_t num_layers() const noexcept { return important_.size(); }
    std::size_t filters_in_layer(std::size_t layer) const { return important_.at(layer).size(); }

    std::vector<FilterId> important() const;
    std::vector<FilterId> unimportant() const;
    std::size_t count_important() const;
    std::size_t count_unimportant() const;
    std::size_t size() const;

    const PerFilter<bool>& mask() const noexcept { return important_; }

    friend bool operator==(const FilterPartition&, const FilterPartition&) = default;

private:
    PerFilter<bool> important_;
};

} // namespace gescl
