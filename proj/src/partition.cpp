// SPDX-License-Identifier: Apache-2.0
#include "gescl/partition.hpp"

namespace gescl {

namespace {

PerFilter<bool> uniform_mask(const std::vector<std::size_t>& filters_per_layer, bool value)
{
    PerFilter<bool> mask;
    mask.reserve(filters_per_layer.size());
    for (std::size_t n : filters_per_layer)
        mask.emplace_back(n, value);
    return mask;
}

} // namespace

FilterPartition::FilterPartition(PerFilter<bool> important) : important_(std::move(important)) {}

FilterPartition FilterPartition::all_unimportant(const std::vector<std::size_t>& filters_per_layer)
{
    return FilterPartition(uniform_mask(filters_per_layer, false));
}

FilterPartition FilterPartition::all_important(const std::vector<std::size_t>& filters_per_layer)
{
    return FilterPartition(uniform_mask(filters_per_layer, true));
}

std::vector<FilterId> FilterPartition::important() const
{
    std::vector<FilterId> out;
    for (std::size_t i = 0; i < important_.size(); ++i)
        for (std::size_t j = 0; j < important_[i].size(); ++j)
            if (important_[i][j])
                out.push_back({i, j});
    return out;
}

std::vector<FilterId> FilterPartition::unimportant() const
{
    std::vector<FilterId> out;
    for (std::size_t i = 0; i < important_.size(); ++i)
        for (std::size_t j = 0; j < important_[i].size(); ++j)
            if (!important_[i][j])
                out.push_back({i, j});
    return out;
}

std::size_t FilterPartition::count_important() const
{
    std::size_t n = 0;
    for (const auto& layer : important_)
        for (bool b : layer)
            n += b ? 1 : 0;
    return n;
}

std::size_t FilterPartition::size() const
{
    std::size_t n = 0;
    for (const auto& layer : important_)
        n += layer.size();
    return n;
}

std::size_t FilterPartition::count_unimportant() const
{
    return size() - count_important();
}

} // namespace gescl
