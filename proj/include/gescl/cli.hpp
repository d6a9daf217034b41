// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>

namespace gescl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInvalid = 2;

/// Environment variable naming the default output root.
inline constexpr const char* kOutputRootEnv = "GESCL_OUTPUT_ROOT";

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out;
};

/// Output directory: --out, else the config's output_dir, else
/// $GESCL_OUTPUT_ROOT/<config stem>, else runs/<config stem>.
std::filesystem::path output_dir_for(const std::filesystem::path& config_path, const std::filesystem::path& configured,
                                     const Overrides& overrides);

int cmd_run(const std::filesystem::path& config_path, const Overrides& overrides, std::ostream& out,
            std::ostream& err);
int cmd_ablate(const std::filesystem::path& config_path, const std::filesystem::path& grid_path,
               const Overrides& overrides, std::ostream& out, std::ostream& err);
/// Reads <run_dir>/metrics.json and writes the CSV bundle to `dest` (or run_dir).
int cmd_export_plots(const std::filesystem::path& run_dir, const std::optional<std::filesystem::path>& dest,
                     std::ostream& out, std::ostream& err);

/// Full command line entry point used by the executable.
int main(int argc, char** argv, std::ostream& out, std::ostream& err);

} // namespace gescl::cli
