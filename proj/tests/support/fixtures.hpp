// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gescl/data.hpp"
#include "gescl/model.hpp"
#include "gescl/tensor.hpp"

#include <cstdint>
#include <vector>

namespace gescl::testing {

Tensor4 random_tensor(Dims4 dims, std::uint64_t seed, double lo = -1.0, double hi = 1.0);
std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0);

/// Random images with labels drawn uniformly from [0, classes).
LabeledSet random_set(std::size_t n, Dims4 image_dims, std::size_t classes, std::uint64_t seed);

/// Two small 3x3 blocks on 8x8x2 inputs; a few hundred parameters.
ArchitectureSpec tiny_arch();

/// Synthetic stream with `tasks` two-class tasks on 12x12 images.
StreamSpec tiny_stream_spec(std::size_t tasks, std::uint64_t seed, std::size_t train_per_class = 24,
                            std::size_t test_per_class = 12);

/// Largest absolute elementwise difference; infinity on a length mismatch.
double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b);
double max_abs_diff(const Tensor4& a, const Tensor4& b);

/// ||a - b||_2 / ||b||_2 (absolute when b is zero).
double relative_l2(const std::vector<double>& a, const std::vector<double>& b);

} // namespace gescl::testing

namespace gescl::testing {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t parameters = 0;
    std::size_t worst_index = 0;
};

/// Central differences of the mean cross-entropy over `data` for every trunk
/// parameter and every parameter of `head`, compared with backward().
/// Relative error is |analytic - numeric| / (|numeric| + 1e-8).
GradCheckResult finite_difference_check(MultiHeadNetwork& net, const LabeledSet& data, std::size_t head,
                                        double h = 1e-5);

/// Analytic gradient of the mean cross-entropy, in NetworkGradients::flatten() order.
std::vector<double> analytic_gradient(const MultiHeadNetwork& net, const LabeledSet& data, std::size_t head);

} // namespace gescl::testing
