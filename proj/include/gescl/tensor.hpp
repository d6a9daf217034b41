// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace gescl {

using Dims4 = std::array<std::size_t, 4>;

std::string to_string(const Dims4& dims);

/// Dense row-major 4-d array of doubles.
///
/// Activations use (batch, height, width, channels); convolution kernels use
/// (kernel_h, kernel_w, in_channels, out_channels). The last index is the
/// contiguous one in both roles.
class Tensor4 {
public:
    Tensor4() = default;
    explicit Tensor4(Dims4 dims, double fill = 0.0);
    Tensor4(Dims4 dims, std::vector<double> data);

    const Dims4& dims() const noexcept { return dims_; }
    std::size_t dim(std::size_t axis) const noexcept { return dims_[axis]; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    /// Number of elements per leading index (one sample, or one kernel row).
    std::size_t stride0() const noexcept { return dims_[1] * dims_[2] * dims_[3]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }

    std::size_t index(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const noexcept
    {
        return ((a * dims_[1] + b) * dims_[2] + c) * dims_[3] + d;
    }
    double& operator()(std::size_t a, std::size_t b, std::size_t c, std::size_t d) noexcept
    {
        return data_[index(a, b, c, d)];
    }
    double operator()(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const noexcept
    {
        return data_[index(a, b, c, d)];
    }

    void fill(double value);
    bool all_finite() const noexcept;

    friend bool operator==(const Tensor4&, const Tensor4&) = default;

private:
    Dims4 dims_{0, 0, 0, 0};
    std::vector<double> data_;
};

} // namespace gescl
