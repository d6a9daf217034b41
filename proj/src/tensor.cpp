// SPDX-License-Identifier: Apache-2.0
#include "gescl/tensor.hpp"

#include "gescl/errors.hpp"

#include <algorithm>
#include <cmath>

namespace gescl {

namespace {

std::size_t product(const Dims4& dims)
{
    return dims[0] * dims[1] * dims[2] * dims[3];
}

} // namespace

std::string to_string(const Dims4& dims)
{
    return "(" + std::to_string(dims[0]) + ", " + std::to_string(dims[1]) + ", " +
           std::to_string(dims[2]) + ", " + std::to_string(dims[3]) + ")";
}

Tensor4::Tensor4(Dims4 dims, double fill) : dims_(dims), data_(product(dims), fill) {}

Tensor4::Tensor4(Dims4 dims, std::vector<double> data) : dims_(dims), data_(std::move(data))
{
    if (data_.size() != product(dims_))
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match dims " + to_string(dims_));
}

void Tensor4::fill(double value)
{
    std::fill(data_.begin(), data_.end(), value);
}

bool Tensor4::all_finite() const noexcept
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

} // namespace gescl
