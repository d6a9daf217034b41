// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gescl/importance.hpp"
#include "gescl/model.hpp"

#include <cstdint>
#include <filesystem>

namespace gescl {

/// State after a completed task: network, importance and the run seed.
struct Checkpoint {
    std::size_t completed_tasks = 0;
    std::uint64_t run_seed = 0;
    MultiHeadNetwork network;
    ImportanceState importance;
};

/// Layout: "GESCLCKP", u32 version, u64 header length, JSON header
/// (architecture, head shapes, importance, seeds), u64 value count, then
/// every parameter as a little-endian IEEE double. The file is written to a
/// temporary name and renamed, so a crash never leaves a torn checkpoint.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Throws IngestionError for a missing, truncated or malformed file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Writes `contents` to `path` through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

} // namespace gescl
