// SPDX-License-Identifier: Apache-2.0
#include "gescl/model.hpp"

#include "gescl/errors.hpp"
#include "gescl/kernels.hpp"

#include <cmath>

namespace gescl {

namespace {

std::seed_seq make_seed_seq(std::uint64_t seed, std::uint32_t stream, std::uint32_t index)
{
    return std::seed_seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream,
                         index};
}

constexpr std::uint32_t kTrunkStream = 0;
constexpr std::uint32_t kHeadStream = 1;

} // namespace

ArchitectureSpec ArchitectureSpec::three_block(std::size_t height, std::size_t width, std::size_t channels)
{
    return {height, width, channels, {{3, 32}, {3, 64}, {3, 128}}};
}

ArchitectureSpec ArchitectureSpec::two_block(std::size_t height, std::size_t width, std::size_t channels)
{
    return {height, width, channels, {{2, 64}, {2, 64}}};
}

void ArchitectureSpec::validate() const
{
    if (blocks.size() < 2)
        throw ConfigError("architecture needs at least 2 conv blocks, got " + std::to_string(blocks.size()));
    if (height == 0 || width == 0 || channels == 0)
        throw ConfigError("architecture input dims must be positive");
    std::size_t h = height, w = width;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (blocks[i].filters == 0)
            throw ConfigError("conv block " + std::to_string(i) + " has zero filters");
        if (blocks[i].kernel_size == 0)
            throw ConfigError("conv block " + std::to_string(i) + " has zero kernel size");
        if (blocks[i].kernel_size > h || blocks[i].kernel_size > w)
            throw ConfigError("conv block " + std::to_string(i) + " kernel exceeds its " + std::to_string(h) +
                              "x" + std::to_string(w) + " input");
        h /= 2;
        w /= 2;
        if (h == 0 || w == 0)
            throw ConfigError("trunk collapses to zero spatial size after block " + std::to_string(i));
    }
}

std::size_t ArchitectureSpec::conv_height(std::size_t layer) const
{
    std::size_t h = height;
    for (std::size_t i = 0; i < layer; ++i)
        h /= 2;
    return h;
}

std::size_t ArchitectureSpec::conv_width(std::size_t layer) const
{
    std::size_t w = width;
    for (std::size_t i = 0; i < layer; ++i)
        w /= 2;
    return w;
}

std::size_t ArchitectureSpec::trunk_features() const
{
    const std::size_t last = blocks.size() - 1;
    return (conv_height(last) / 2) * (conv_width(last) / 2) * blocks[last].filters;
}

FilterGroup::FilterGroup(LayerParams& layer, std::size_t layer_index, std::size_t filter)
    : layer_(&layer), layer_index_(layer_index), filter_(filter), kernel_length_(layer.filter_length()),
      stride_(layer.filters())
{
    if (filter >= layer.filters())
        throw InputError("filter " + std::to_string(filter) + " out of range in layer " +
                         std::to_string(layer_index));
}

std::vector<double> FilterGroup::values() const
{
    return filter_values(*layer_, filter_);
}

void FilterGroup::assign(std::span<const double> values)
{
    if (values.size() != size())
        throw ShapeError("filter group expects " + std::to_string(size()) + " values, got " +
                         std::to_string(values.size()));
    for (std::size_t e = 0; e < kernel_length_; ++e)
        kernel(e) = values[e];
    bias() = values[kernel_length_];
}

std::vector<double> filter_values(const LayerParams& layer, std::size_t filter)
{
    const std::size_t len = layer.filter_length();
    const std::size_t stride = layer.filters();
    std::vector<double> out(len + 1);
    const double* k = layer.kernel.data();
    for (std::size_t e = 0; e < len; ++e)
        out[e] = k[e * stride + filter];
    out[len] = layer.bias[filter];
    return out;
}

NextLayerChannelView::NextLayerChannelView(LayerParams& next_layer, std::size_t next_layer_index,
                                           std::size_t channel)
    : layer_(&next_layer), layer_index_(next_layer_index), channel_(channel)
{
    if (channel >= next_layer.in_channels())
        throw InputError("channel " + std::to_string(channel) + " out of range for layer " +
                         std::to_string(next_layer_index));
}

std::size_t NextLayerChannelView::size() const noexcept
{
    return layer_->kernel.dim(0) * layer_->kernel.dim(1) * layer_->filters();
}

double& NextLayerChannelView::at(std::size_t e) noexcept
{
    const std::size_t filters = layer_->filters();
    const std::size_t tap = e / filters;
    const std::size_t out = e % filters;
    return layer_->kernel.data()[(tap * layer_->in_channels() + channel_) * filters + out];
}

void NextLayerChannelView::zero() noexcept
{
    for (std::size_t e = 0; e < size(); ++e)
        at(e) = 0.0;
}

HeUniform::HeUniform(std::seed_seq& seq) : rng_(seq) {}

double HeUniform::operator()(std::size_t fan_in)
{
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    return std::uniform_real_distribution<double>(-limit, limit)(rng_);
}

MultiHeadNetwork::MultiHeadNetwork(ArchitectureSpec arch, std::uint64_t seed, std::vector<LayerParams> layers,
                                   std::vector<HeadParams> heads)
    : arch_(std::move(arch)), seed_(seed), layers_(std::move(layers)), heads_(std::move(heads))
{
    arch_.validate();
    if (layers_.size() != arch_.blocks.size())
        throw ShapeError("network has " + std::to_string(layers_.size()) + " layers, architecture lists " +
                         std::to_string(arch_.blocks.size()));
    std::size_t in_ch = arch_.channels;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& b = arch_.blocks[i];
        const Dims4 want{b.kernel_size, b.kernel_size, in_ch, b.filters};
        if (layers_[i].kernel.dims() != want || layers_[i].bias.size() != b.filters)
            throw ShapeError("layer " + std::to_string(i) + " kernel " + to_string(layers_[i].kernel.dims()) +
                             " does not match architecture " + to_string(want));
        in_ch = b.filters;
    }
    for (const auto& h : heads_)
        if (h.features != arch_.trunk_features() || h.weights.size() != h.features * h.classes ||
            h.bias.size() != h.classes)
            throw ShapeError("head shape does not match trunk output");
}

std::vector<std::size_t> MultiHeadNetwork::filters_per_layer() const
{
    std::vector<std::size_t> out;
    for (const auto& l : layers_)
        out.push_back(l.filters());
    return out;
}

std::size_t MultiHeadNetwork::total_filters() const
{
    std::size_t n = 0;
    for (const auto& l : layers_)
        n += l.filters();
    return n;
}

HeadParams& MultiHeadNetwork::head(std::size_t h)
{
    if (h >= heads_.size())
        throw InputError("unknown head " + std::to_string(h) + " (network has " + std::to_string(heads_.size()) +
                         ")");
    return heads_[h];
}

const HeadParams& MultiHeadNetwork::head(std::size_t h) const
{
    if (h >= heads_.size())
        throw InputError("unknown head " + std::to_string(h) + " (network has " + std::to_string(heads_.size()) +
                         ")");
    return heads_[h];
}

std::size_t MultiHeadNetwork::add_head(std::size_t num_classes)
{
    if (num_classes < 2)
        throw ConfigError("a head needs at least 2 classes, got " + std::to_string(num_classes));
    const std::size_t index = heads_.size();
    HeadParams head;
    head.features = arch_.trunk_features();
    head.classes = num_classes;
    head.weights.resize(head.features * num_classes);
    head.bias.assign(num_classes, 0.0);
    auto seq = make_seed_seq(seed_, kHeadStream, static_cast<std::uint32_t>(index));
    HeUniform init(seq);
    for (double& w : head.weights)
        w = init(head.features);
    for (auto& h : heads_)
        h.frozen = true;
    heads_.push_back(std::move(head));
    return index;
}

std::vector<FilterGroup> MultiHeadNetwork::filter_groups()
{
    std::vector<FilterGroup> groups;
    groups.reserve(total_filters());
    for (std::size_t i = 0; i < layers_.size(); ++i)
        for (std::size_t j = 0; j < layers_[i].filters(); ++j)
            groups.emplace_back(layers_[i], i, j);
    return groups;
}

FilterGroup MultiHeadNetwork::filter_group(FilterId id)
{
    if (id.layer >= layers_.size())
        throw InputError("layer " + std::to_string(id.layer) + " out of range");
    return FilterGroup(layers_[id.layer], id.layer, id.filter);
}

NextLayerChannelView MultiHeadNetwork::next_layer_channel(std::size_t layer, std::size_t channel)
{
    if (layer + 1 >= layers_.size())
        throw InputError("layer " + std::to_string(layer) + " has no following conv layer");
    return NextLayerChannelView(layers_[layer + 1], layer + 1, channel);
}

std::size_t MultiHeadNetwork::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& l : layers_)
        n += l.kernel.size() + l.bias.size();
    for (const auto& h : heads_)
        n += h.weights.size() + h.bias.size();
    return n;
}

MultiHeadNetwork build_network(const ArchitectureSpec& arch, std::uint64_t seed)
{
    arch.validate();
    std::vector<LayerParams> layers;
    std::size_t in_ch = arch.channels;
    for (std::size_t i = 0; i < arch.blocks.size(); ++i) {
        const auto& b = arch.blocks[i];
        LayerParams p;
        p.kernel = Tensor4({b.kernel_size, b.kernel_size, in_ch, b.filters});
        p.bias.assign(b.filters, 0.0);
        auto seq = make_seed_seq(seed, kTrunkStream, static_cast<std::uint32_t>(i));
        HeUniform init(seq);
        const std::size_t fan_in = p.filter_length();
        for (double& w : p.kernel.values())
            w = init(fan_in);
        layers.push_back(std::move(p));
        in_ch = b.filters;
    }
    return MultiHeadNetwork(arch, seed, std::move(layers));
}

namespace {

void check_batch(const MultiHeadNetwork& net, const Tensor4& batch)
{
    const auto& a = net.arch();
    if (batch.dim(1) != a.height || batch.dim(2) != a.width || batch.dim(3) != a.channels)
        throw ShapeError("batch dims " + to_string(batch.dims()) + " do not match architecture input (" +
                         std::to_string(a.height) + ", " + std::to_string(a.width) + ", " +
                         std::to_string(a.channels) + ")");
}

} // namespace

ForwardPass forward(const MultiHeadNetwork& net, const Tensor4& batch, std::size_t head, ForwardOptions options)
{
    const HeadParams& hp = net.head(head);
    check_batch(net, batch);

    ForwardPass pass;
    if (options.record_tape)
        pass.tape = GradientTape(net);

    Tensor4 x = batch;
    for (std::size_t i = 0; i < net.num_layers(); ++i) {
        const auto& layer = net.layer(i);
        Tensor4 pre = kernels::conv2d(x, layer.kernel, layer.bias);
        if (options.record_tape)
            pass.tape.push({TapeRecord::Op::conv2d, i, std::move(x), {}, {}});
        Tensor4 act = kernels::relu(pre);
        if (options.record_tape)
            pass.tape.push({TapeRecord::Op::relu, i, act, {}, {}});
        PoolResult pooled = kernels::maxpool2x2(act);
        if (options.record_tape)
            pass.tape.push({TapeRecord::Op::maxpool2x2, i, {}, act.dims(), std::move(pooled.argmax)});
        if (options.keep_activations)
            pass.activations.push_back(std::move(act));
        x = std::move(pooled.output);
    }
    pass.logits = kernels::dense(x, hp.weights, hp.bias);
    if (options.record_tape)
        pass.tape.push({TapeRecord::Op::dense, head, std::move(x), {}, {}});
    return pass;
}

std::vector<Tensor4> trunk_activations(const MultiHeadNetwork& net, const Tensor4& batch)
{
    check_batch(net, batch);
    std::vector<Tensor4> acts;
    Tensor4 x = batch;
    for (std::size_t i = 0; i < net.num_layers(); ++i) {
        const auto& layer = net.layer(i);
        Tensor4 act = kernels::relu(kernels::conv2d(x, layer.kernel, layer.bias));
        x = kernels::maxpool2x2(act).output;
        acts.push_back(std::move(act));
    }
    return acts;
}

} // namespace gescl
