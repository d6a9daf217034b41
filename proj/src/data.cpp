// SPDX-License-Identifier: Apache-2.0
#include "gescl/data.hpp"

#include "gescl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>

namespace gescl {

LabeledSet LabeledSet::select(std::span<const std::size_t> indices) const
{
    const std::size_t per = images.stride0();
    LabeledSet out;
    out.images = Tensor4({indices.size(), images.dim(1), images.dim(2), images.dim(3)});
    out.labels.reserve(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const std::size_t i = indices[k];
        if (i >= size())
            throw InputError("sample index " + std::to_string(i) + " out of range");
        std::copy_n(images.data() + i * per, per, out.images.data() + k * per);
        out.labels.push_back(labels[i]);
    }
    return out;
}

LabeledSet LabeledSet::slice(std::size_t begin, std::size_t end) const
{
    if (begin > end || end > size())
        throw InputError("slice out of range");
    const std::size_t per = images.stride0();
    LabeledSet out;
    out.images = Tensor4({end - begin, images.dim(1), images.dim(2), images.dim(3)},
                         std::vector<double>(images.data() + begin * per, images.data() + end * per));
    out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                      labels.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
}

// ---------------------------------------------------------------- IDX

namespace {

std::uint32_t read_be32(std::istream& in)
{
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw IngestionError("truncated IDX header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v)
{
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

constexpr unsigned char kUnsignedByte = 0x08;

} // namespace

IdxArray read_idx(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IngestionError("cannot open IDX file " + path.string());
    unsigned char magic[4];
    if (!in.read(reinterpret_cast<char*>(magic), 4))
        throw IngestionError(path.string() + ": truncated IDX magic");
    if (magic[0] != 0 || magic[1] != 0)
        throw IngestionError(path.string() + ": bad IDX magic");
    if (magic[2] != kUnsignedByte)
        throw IngestionError(path.string() + ": unsupported IDX element type " + std::to_string(magic[2]));
    if (magic[3] == 0)
        throw IngestionError(path.string() + ": IDX file with zero dimensions");
    IdxArray arr;
    std::size_t count = 1;
    for (int d = 0; d < magic[3]; ++d) {
        arr.dims.push_back(read_be32(in));
        count *= arr.dims.back();
    }
    arr.bytes.resize(count);
    if (!in.read(reinterpret_cast<char*>(arr.bytes.data()), static_cast<std::streamsize>(count)))
        throw IngestionError(path.string() + ": payload shorter than header dims");
    return arr;
}

void write_idx(const std::filesystem::path& path, const IdxArray& array)
{
    std::size_t count = 1;
    for (auto d : array.dims)
        count *= d;
    if (array.dims.empty() || array.dims.size() > 255 || count != array.bytes.size())
        throw InputError("write_idx: dims do not match payload");
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IngestionError("cannot write IDX file " + path.string());
    const unsigned char magic[4] = {0, 0, kUnsignedByte, static_cast<unsigned char>(array.dims.size())};
    out.write(reinterpret_cast<const char*>(magic), 4);
    for (auto d : array.dims)
        write_be32(out, d);
    out.write(reinterpret_cast<const char*>(array.bytes.data()), static_cast<std::streamsize>(count));
    if (!out)
        throw IngestionError("failed writing " + path.string());
}

Corpus load_idx_corpus(const std::filesystem::path& images, const std::filesystem::path& labels)
{
    const IdxArray img = read_idx(images);
    const IdxArray lab = read_idx(labels);
    if (img.dims.size() != 3 && img.dims.size() != 4)
        throw IngestionError(images.string() + ": expected 3 or 4 dims, got " + std::to_string(img.dims.size()));
    if (lab.dims.size() != 1)
        throw IngestionError(labels.string() + ": expected 1 dim");
    if (lab.dims[0] != img.dims[0])
        throw IngestionError("label count " + std::to_string(lab.dims[0]) + " != image count " +
                             std::to_string(img.dims[0]));
    const std::size_t channels = img.dims.size() == 4 ? img.dims[3] : 1;
    Corpus c;
    std::vector<double> pixels(img.bytes.size());
    std::transform(img.bytes.begin(), img.bytes.end(), pixels.begin(),
                   [](std::uint8_t b) { return static_cast<double>(b) / 255.0; });
    c.images = Tensor4({img.dims[0], img.dims[1], img.dims[2], channels}, std::move(pixels));
    c.labels.assign(lab.bytes.begin(), lab.bytes.end());
    return c;
}

void write_idx_corpus(const Corpus& corpus, const std::filesystem::path& images,
                      const std::filesystem::path& labels)
{
    IdxArray img;
    const auto& d = corpus.images.dims();
    img.dims = {static_cast<std::uint32_t>(d[0]), static_cast<std::uint32_t>(d[1]),
                static_cast<std::uint32_t>(d[2])};
    if (d[3] != 1)
        img.dims.push_back(static_cast<std::uint32_t>(d[3]));
    img.bytes.resize(corpus.images.size());
    std::transform(corpus.images.values().begin(), corpus.images.values().end(), img.bytes.begin(),
                   [](double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); });
    IdxArray lab;
    lab.dims = {static_cast<std::uint32_t>(corpus.size())};
    for (auto l : corpus.labels) {
        if (l > 255)
            throw InputError("write_idx_corpus: label does not fit in a byte");
        lab.bytes.push_back(static_cast<std::uint8_t>(l));
    }
    write_idx(images, img);
    write_idx(labels, lab);
}

// ---------------------------------------------------------- synthetic

namespace {

struct Blob {
    double cy, cx, sigma, amplitude;
    std::vector<double> channel_gain;
};

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint32_t a, std::uint32_t b, std::uint32_t c)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), a, b, c};
    return std::mt19937_64(seq);
}

void render_sample(const SyntheticSpec& spec, const std::vector<Blob>& blobs, std::mt19937_64& rng, double* out)
{
    std::uniform_int_distribution<int> shift(-static_cast<int>(spec.jitter), static_cast<int>(spec.jitter));
    std::uniform_real_distribution<double> gain(0.8, 1.2);
    std::normal_distribution<double> noise(0.0, spec.noise);
    std::vector<Blob> placed = blobs;
    for (auto& b : placed) {
        b.cy += shift(rng);
        b.cx += shift(rng);
        b.amplitude *= gain(rng);
    }
    for (std::size_t y = 0; y < spec.height; ++y)
        for (std::size_t x = 0; x < spec.width; ++x)
            for (std::size_t c = 0; c < spec.channels; ++c) {
                double v = 0.0;
                for (const auto& b : placed) {
                    const double dy = static_cast<double>(y) - b.cy;
                    const double dx = static_cast<double>(x) - b.cx;
                    v += b.amplitude * b.channel_gain[c] * std::exp(-(dy * dy + dx * dx) / (2.0 * b.sigma * b.sigma));
                }
                v += noise(rng);
                out[(y * spec.width + x) * spec.channels + c] = std::clamp(v, 0.0, 1.0);
            }
}

} // namespace

SplitCorpus generate_synthetic(const SyntheticSpec& spec)
{
    if (spec.classes < 2 || spec.height == 0 || spec.width == 0 || spec.channels == 0 || spec.blobs_per_class == 0)
        throw ConfigError("synthetic corpus needs >= 2 classes, >= 1 blob and positive image dims");
    if (spec.train_per_class == 0 || spec.test_per_class == 0)
        throw ConfigError("synthetic corpus needs at least one train and one test sample per class");
    if (spec.noise < 0.0)
        throw ConfigError("synthetic noise must be >= 0");

    std::vector<std::vector<Blob>> prototypes(spec.classes);
    const double margin = std::min<double>(4.0, static_cast<double>(std::min(spec.height, spec.width)) / 4.0);
    for (std::size_t c = 0; c < spec.classes; ++c) {
        auto rng = stream_rng(spec.seed, 0, static_cast<std::uint32_t>(c), 0);
        std::uniform_real_distribution<double> ypos(margin, static_cast<double>(spec.height) - 1.0 - margin);
        std::uniform_real_distribution<double> xpos(margin, static_cast<double>(spec.width) - 1.0 - margin);
        std::uniform_real_distribution<double> sigma(1.5, 3.0);
        std::uniform_real_distribution<double> amp(0.6, 1.0);
        std::uniform_real_distribution<double> chan(0.3, 1.0);
        for (std::size_t b = 0; b < spec.blobs_per_class; ++b) {
            Blob blob{ypos(rng), xpos(rng), sigma(rng), amp(rng), {}};
            for (std::size_t ch = 0; ch < spec.channels; ++ch)
                blob.channel_gain.push_back(spec.channels == 1 ? 1.0 : chan(rng));
            prototypes[c].push_back(std::move(blob));
        }
    }

    auto make_split = [&](std::uint32_t split, std::size_t per_class) {
        Corpus out;
        const std::size_t n = per_class * spec.classes;
        out.images = Tensor4({n, spec.height, spec.width, spec.channels});
        out.labels.resize(n);
        const std::size_t per = out.images.stride0();
        // Interleave classes so that file order is not sorted by label.
        for (std::size_t k = 0; k < per_class; ++k)
            for (std::size_t c = 0; c < spec.classes; ++c) {
                const std::size_t i = k * spec.classes + c;
                auto rng = stream_rng(spec.seed, split, static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(k));
                render_sample(spec, prototypes[c], rng, out.images.data() + i * per);
                out.labels[i] = c;
            }
        return out;
    };
    return {make_split(1, spec.train_per_class), make_split(2, spec.test_per_class)};
}

// ---------------------------------------------------------------- streams

TaskDataset::TaskDataset(std::vector<std::size_t> classes, LabeledSet train, LabeledSet test)
    : classes_(std::move(classes)), train_(std::move(train)), test_(std::move(test)), train_size_(train_.size())
{
}

const LabeledSet& TaskDataset::train() const
{
    if (released_)
        throw StateError("training split was released after its task finished training");
    return train_;
}

void TaskDataset::release_train()
{
    train_ = LabeledSet{};
    released_ = true;
}

Dims4 TaskStream::image_dims() const
{
    if (tasks.empty())
        throw StateError("empty task stream");
    const auto& d = tasks.front().test().images.dims();
    return {1, d[1], d[2], d[3]};
}

namespace {

std::vector<std::vector<std::size_t>> resolve_groups(const StreamSpec& spec, const std::set<std::size_t>& present)
{
    std::vector<std::vector<std::size_t>> groups = spec.class_groups;
    if (groups.empty()) {
        if (spec.classes_per_task < 2)
            throw IngestionError("classes_per_task must be at least 2");
        if (present.size() % spec.classes_per_task != 0)
            throw IngestionError(std::to_string(present.size()) + " classes cannot be grouped by " +
                                 std::to_string(spec.classes_per_task));
        std::vector<std::size_t> sorted(present.begin(), present.end());
        for (std::size_t i = 0; i < sorted.size(); i += spec.classes_per_task)
            groups.emplace_back(sorted.begin() + static_cast<std::ptrdiff_t>(i),
                                sorted.begin() + static_cast<std::ptrdiff_t>(i + spec.classes_per_task));
    }
    std::set<std::size_t> covered;
    for (const auto& g : groups) {
        if (g.size() < 2)
            throw IngestionError("every task needs at least 2 classes");
        for (auto c : g) {
            if (!present.count(c))
                throw IngestionError("class " + std::to_string(c) + " is not present in the corpus");
            if (!covered.insert(c).second)
                throw IngestionError("class " + std::to_string(c) + " appears in more than one task");
        }
    }
    if (covered.size() != present.size())
        throw IngestionError("class grouping covers " + std::to_string(covered.size()) + " of " +
                             std::to_string(present.size()) + " classes");
    return groups;
}

LabeledSet take_group(const Corpus& corpus, const std::vector<std::size_t>& group, std::size_t cap)
{
    std::map<std::size_t, std::size_t> local;
    for (std::size_t k = 0; k < group.size(); ++k)
        local[group[k]] = k;
    std::vector<std::size_t> counts(group.size(), 0);
    std::vector<std::size_t> picked;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        auto it = local.find(corpus.labels[i]);
        if (it == local.end())
            continue;
        if (cap != 0 && counts[it->second] >= cap)
            continue;
        ++counts[it->second];
        picked.push_back(i);
    }
    LabeledSet out = corpus.select(picked);
    for (auto& l : out.labels)
        l = local.at(l);
    return out;
}

void standardize(LabeledSet& train, LabeledSet& test)
{
    const std::size_t ch = train.images.dim(3);
    std::vector<double> mean(ch, 0.0), var(ch, 0.0);
    const std::size_t pixels = train.images.size() / ch;
    const auto v = train.images.values();
    for (std::size_t p = 0; p < pixels; ++p)
        for (std::size_t c = 0; c < ch; ++c)
            mean[c] += v[p * ch + c];
    for (auto& m : mean)
        m /= static_cast<double>(pixels);
    for (std::size_t p = 0; p < pixels; ++p)
        for (std::size_t c = 0; c < ch; ++c) {
            const double d = v[p * ch + c] - mean[c];
            var[c] += d * d;
        }
    std::vector<double> inv_std(ch);
    for (std::size_t c = 0; c < ch; ++c) {
        const double sd = std::sqrt(var[c] / static_cast<double>(pixels));
        inv_std[c] = sd > 1e-12 ? 1.0 / sd : 1.0;
    }
    for (LabeledSet* set : {&train, &test}) {
        auto vals = set->images.values();
        for (std::size_t i = 0; i < vals.size(); ++i)
            vals[i] = (vals[i] - mean[i % ch]) * inv_std[i % ch];
    }
}

} // namespace

TaskStream build_stream(const SplitCorpus& corpus, const StreamSpec& spec)
{
    if (corpus.train.empty() || corpus.test.empty())
        throw IngestionError("corpus has an empty train or test split");
    if (corpus.train.images.stride0() != corpus.test.images.stride0())
        throw IngestionError("train and test images differ in shape");
    std::set<std::size_t> present(corpus.train.labels.begin(), corpus.train.labels.end());
    const auto groups = resolve_groups(spec, present);
    TaskStream stream;
    for (const auto& g : groups) {
        LabeledSet train = take_group(corpus.train, g, spec.max_train_per_class);
        LabeledSet test = take_group(corpus.test, g, spec.max_test_per_class);
        if (test.empty())
            throw IngestionError("task has no test samples");
        standardize(train, test);
        stream.tasks.emplace_back(g, std::move(train), std::move(test));
    }
    return stream;
}

TaskStream build_stream(const StreamSpec& spec)
{
    if (spec.source == StreamSpec::Source::synthetic)
        return build_stream(generate_synthetic(spec.synthetic), spec);
    SplitCorpus corpus{load_idx_corpus(spec.idx.train_images, spec.idx.train_labels),
                       load_idx_corpus(spec.idx.test_images, spec.idx.test_labels)};
    return build_stream(corpus, spec);
}

} // namespace gescl
