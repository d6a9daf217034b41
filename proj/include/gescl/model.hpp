// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gescl/partition.hpp"
#include "gescl/tape.hpp"
#include "gescl/tensor.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace gescl {

struct ConvBlockSpec {
    std::size_t kernel_size = 3;
    std::size_t filters = 0;
    friend bool operator==(const ConvBlockSpec&, const ConvBlockSpec&) = default;
};

/// Input geometry plus the conv -> ReLU -> 2x2 max-pool blocks of the trunk.
struct ArchitectureSpec {
    std::size_t height = 28;
    std::size_t width = 28;
    std::size_t channels = 1;
    std::vector<ConvBlockSpec> blocks;

    /// 3x3 convolutions with 32, 64 and 128 filters.
    static ArchitectureSpec three_block(std::size_t height, std::size_t width, std::size_t channels);
    /// Two 2x2 convolutions with 64 filters each.
    static ArchitectureSpec two_block(std::size_t height, std::size_t width, std::size_t channels);

    /// Throws ConfigError for fewer than two blocks, zero filters or kernels,
    /// or a trunk whose spatial size collapses to zero.
    void validate() const;

    /// Spatial size of the conv output of `layer` (before pooling).
    std::size_t conv_height(std::size_t layer) const;
    std::size_t conv_width(std::size_t layer) const;
    /// Flattened length of the trunk output after the last pool.
    std::size_t trunk_features() const;

    friend bool operator==(const ArchitectureSpec&, const ArchitectureSpec&) = default;
};

struct LayerParams {
    Tensor4 kernel;             ///< (k, k, in_channels, filters)
    std::vector<double> bias;   ///< one entry per filter

    std::size_t kernel_size() const noexcept { return kernel.dim(0); }
    std::size_t in_channels() const noexcept { return kernel.dim(2); }
    std::size_t filters() const noexcept { return kernel.dim(3); }
    /// Kernel entries of one filter: k * k * in_channels.
    std::size_t filter_length() const noexcept { return kernel.dim(0) * kernel.dim(1) * kernel.dim(2); }

    friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

/// Dense classifier from the flattened trunk output. weights is features x classes.
struct HeadParams {
    std::size_t features = 0;
    std::size_t classes = 0;
    std::vector<double> weights;
    std::vector<double> bias;
    bool frozen = false;

    friend bool operator==(const HeadParams&, const HeadParams&) = default;
};

/// Kernel entries (strided view) plus bias of one filter. Mutations go
/// straight into the owning LayerParams.
class FilterGroup {
public:
    FilterGroup(LayerParams& layer, std::size_t layer_index, std::size_t filter);

    FilterId id() const noexcept { return {layer_index_, filter_}; }
    std::size_t kernel_length() const noexcept { return kernel_length_; }
    /// Kernel entries plus the bias entry.
    std::size_t size() const noexcept { return kernel_length_ + 1; }

    /// e indexes (ky, kx, in_channel) in row-major order.
    double& kernel(std::size_t e) noexcept { return layer_->kernel.data()[e * stride_ + filter_]; }
    double kernel(std::size_t e) const noexcept { return layer_->kernel.data()[e * stride_ + filter_]; }
    double& bias() noexcept { return layer_->bias[filter_]; }
    double bias() const noexcept { return layer_->bias[filter_]; }

    /// Kernel entries followed by the bias.
    std::vector<double> values() const;
    void assign(std::span<const double> values);

private:
    LayerParams* layer_;
    std::size_t layer_index_;
    std::size_t filter_;
    std::size_t kernel_length_;
    std::size_t stride_;
};

/// Input channel j of every filter in layer i + 1: the weights that read the
/// output of filter (i, j).
class NextLayerChannelView {
public:
    NextLayerChannelView(LayerParams& next_layer, std::size_t next_layer_index, std::size_t channel);

    std::size_t layer_index() const noexcept { return layer_index_; }
    std::size_t channel() const noexcept { return channel_; }
    /// k * k * filters of the next layer.
    std::size_t size() const noexcept;
    /// e indexes (ky, kx, out_filter) in row-major order.
    double& at(std::size_t e) noexcept;
    void zero() noexcept;

private:
    LayerParams* layer_;
    std::size_t layer_index_;
    std::size_t channel_;
};

/// Values of filter j (kernel entries then bias) without needing mutable access.
std::vector<double> filter_values(const LayerParams& layer, std::size_t filter);

/// Draws He-uniform values, U(-sqrt(6 / fan_in), sqrt(6 / fan_in)).
class HeUniform {
public:
    explicit HeUniform(std::seed_seq& seq);
    double operator()(std::size_t fan_in);

private:
    std::mt19937_64 rng_;
};

/// Shared convolutional trunk with one dense head per task.
class MultiHeadNetwork {
public:
    MultiHeadNetwork(ArchitectureSpec arch, std::uint64_t seed, std::vector<LayerParams> layers,
                     std::vector<HeadParams> heads = {});

    const ArchitectureSpec& arch() const noexcept { return arch_; }
    std::uint64_t seed() const noexcept { return seed_; }

    std::size_t num_layers() const noexcept { return layers_.size(); }
    LayerParams& layer(std::size_t i) { return layers_.at(i); }
    const LayerParams& layer(std::size_t i) const { return layers_.at(i); }
    const std::vector<LayerParams>& layers() const noexcept { return layers_; }
    std::vector<std::size_t> filters_per_layer() const;
    std::size_t total_filters() const;

    std::size_t num_heads() const noexcept { return heads_.size(); }
    HeadParams& head(std::size_t h);
    const HeadParams& head(std::size_t h) const;
    const std::vector<HeadParams>& heads() const noexcept { return heads_; }

    /// Appends a He-uniform head with `num_classes` outputs and freezes every
    /// earlier head. Throws ConfigError for num_classes < 2.
    std::size_t add_head(std::size_t num_classes);

    /// Every filter exactly once, in (layer, filter) order.
    std::vector<FilterGroup> filter_groups();
    FilterGroup filter_group(FilterId id);
    /// Throws InputError when `layer` is the last conv layer.
    NextLayerChannelView next_layer_channel(std::size_t layer, std::size_t channel);

    std::size_t parameter_count() const;

    friend bool operator==(const MultiHeadNetwork&, const MultiHeadNetwork&) = default;

private:
    ArchitectureSpec arch_;
    std::uint64_t seed_ = 0;
    std::vector<LayerParams> layers_;
    std::vector<HeadParams> heads_;
};

/// He-uniform kernels, zero biases, no heads. Same seed, same parameters.
MultiHeadNetwork build_network(const ArchitectureSpec& arch, std::uint64_t seed);

struct ForwardOptions {
    bool record_tape = true;
    bool keep_activations = false;
};

struct ForwardPass {
    Tensor4 logits;                    ///< (batch, 1, 1, classes)
    std::vector<Tensor4> activations;  ///< post-ReLU map per conv layer, when kept
    GradientTape tape;
};

/// Runs the trunk and the selected head. Throws InputError for an unknown
/// head and ShapeError when the batch does not match the architecture.
ForwardPass forward(const MultiHeadNetwork& net, const Tensor4& batch, std::size_t head,
                    ForwardOptions options = {});

/// Post-ReLU activation of every conv layer, no head, no tape.
std::vector<Tensor4> trunk_activations(const MultiHeadNetwork& net, const Tensor4& batch);

} // namespace gescl
