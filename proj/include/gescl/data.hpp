// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gescl/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gescl {

/// Images (batch, height, width, channels) with one integer label per image.
struct LabeledSet {
    Tensor4 images;
    std::vector<std::size_t> labels;

    std::size_t size() const noexcept { return labels.size(); }
    bool empty() const noexcept { return labels.empty(); }
    /// Gathers the listed samples into a new set, in the given order.
    LabeledSet select(std::span<const std::size_t> indices) const;
    /// Contiguous samples [begin, end).
    LabeledSet slice(std::size_t begin, std::size_t end) const;
};

// ---------------------------------------------------------------- IDX files

/// Raw IDX array: big-endian header (magic 0x00 0x00 type ndims, then one
/// u32 per dimension) followed by the payload. Only unsigned bytes (type
/// 0x08) are supported.
struct IdxArray {
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> bytes;
};

IdxArray read_idx(const std::filesystem::path& path);
void write_idx(const std::filesystem::path& path, const IdxArray& array);

/// Image corpus with pixel values scaled to [0, 1] and raw class labels.
using Corpus = LabeledSet;

/// Reads an image file (N x H x W or N x H x W x C) and a label file (N).
/// Throws IngestionError for missing files or count mismatches.
Corpus load_idx_corpus(const std::filesystem::path& images, const std::filesystem::path& labels);
/// Quantizes pixels (clamped to [0, 1]) to bytes and writes both files.
void write_idx_corpus(const Corpus& corpus, const std::filesystem::path& images,
                      const std::filesystem::path& labels);

// ---------------------------------------------------------- synthetic data

/// Seeded Gaussian-blob images. Each class is a fixed constellation of blobs;
/// samples jitter blob positions and amplitudes and add pixel noise.
struct SyntheticSpec {
    std::size_t classes = 10;
    std::size_t height = 28;
    std::size_t width = 28;
    std::size_t channels = 1;
    std::size_t train_per_class = 200;
    std::size_t test_per_class = 100;
    std::size_t blobs_per_class = 3;
    double noise = 0.25;
    std::size_t jitter = 2;
    std::uint64_t seed = 0;

    friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

struct SplitCorpus {
    Corpus train;
    Corpus test;
};

SplitCorpus generate_synthetic(const SyntheticSpec& spec);

// ---------------------------------------------------------------- streams

/// One task: a train split that can be released, a persistent test split and
/// the original class ids mapped to head outputs 0..C-1.
class TaskDataset {
public:
    TaskDataset(std::vector<std::size_t> classes, LabeledSet train, LabeledSet test);

    const std::vector<std::size_t>& classes() const noexcept { return classes_; }
    std::size_t num_classes() const noexcept { return classes_.size(); }

    /// Throws StateError once the split has been released.
    const LabeledSet& train() const;
    const LabeledSet& test() const noexcept { return test_; }
    std::size_t train_size() const noexcept { return train_size_; }

    /// Drops the training split; any later train() call throws.
    void release_train();
    bool train_released() const noexcept { return released_; }

private:
    std::vector<std::size_t> classes_;
    LabeledSet train_;
    LabeledSet test_;
    std::size_t train_size_ = 0;
    bool released_ = false;
};

struct TaskStream {
    std::vector<TaskDataset> tasks;

    std::size_t size() const noexcept { return tasks.size(); }
    Dims4 image_dims() const;
};

struct IdxSource {
    std::filesystem::path train_images;
    std::filesystem::path train_labels;
    std::filesystem::path test_images;
    std::filesystem::path test_labels;

    friend bool operator==(const IdxSource&, const IdxSource&) = default;
};

struct StreamSpec {
    enum class Source { synthetic, idx };

    Source source = Source::synthetic;
    SyntheticSpec synthetic;
    IdxSource idx;
    /// Explicit grouping of original class ids; empty means consecutive
    /// groups of classes_per_task.
    std::vector<std::vector<std::size_t>> class_groups;
    std::size_t classes_per_task = 2;
    /// Per-class caps applied in file order; 0 keeps everything.
    std::size_t max_train_per_class = 0;
    std::size_t max_test_per_class = 0;

    friend bool operator==(const StreamSpec&, const StreamSpec&) = default;
};

/// Splits a corpus into tasks. Labels are remapped per task to 0..C-1 and
/// each task is standardized per channel with statistics of its own train
/// split. Throws IngestionError when the grouping does not cover every class
/// exactly once.
TaskStream build_stream(const StreamSpec& spec);
TaskStream build_stream(const SplitCorpus& corpus, const StreamSpec& spec);

} // namespace gescl
