// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gescl/data.hpp"
#include "gescl/model.hpp"
#include "gescl/pgd.hpp"
#include "gescl/regularization.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace gescl {

/// Everything a run needs. Input geometry of the architecture is taken from
/// the stream at run time, so only the conv blocks are configured here.
struct RunConfig {
    std::string preset = "three_block";  ///< "three_block", "two_block" or "custom"
    std::vector<ConvBlockSpec> blocks;   ///< used when preset is "custom"
    StreamSpec stream;
    RegularizerConfig reg;
    OptimizerConfig opt;
    std::uint64_t seed = 0;
    std::filesystem::path output_dir;    ///< empty: chosen by the caller
    bool write_checkpoints = true;

    ArchitectureSpec architecture() const;
    /// Throws ConfigError naming the first invalid field; checks that IDX
    /// files exist.
    void validate() const;
    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Relative paths are resolved against `base_dir`. Unknown keys are rejected.
/// Throws ConfigError.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

/// One ablation row: which components stay on.
struct AblationVariant {
    bool mu_s = true;
    bool mu_p = true;
    bool nu = true;
    friend bool operator==(const AblationVariant&, const AblationVariant&) = default;
};

/// {"variants": [{"mu_s": true, "mu_p": false, "nu": true}, ...]}
std::vector<AblationVariant> parse_grid(const nlohmann::json& j);
std::vector<AblationVariant> load_grid(const std::filesystem::path& path);

/// Copy of `cfg` with the disabled components set to zero.
RunConfig apply_variant(const RunConfig& cfg, const AblationVariant& v);

} // namespace gescl
