// SPDX-License-Identifier: Apache-2.0
#include "gescl/cli.hpp"

#include "gescl/checkpoint.hpp"
#include "gescl/config.hpp"
#include "gescl/errors.hpp"
#include "gescl/harness.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace gescl::cli {

namespace {

/// Invalid input (exit 2) versus failures while running (exit 1).
template <class F>
int guarded(std::ostream& err, F&& body)
{
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "invalid config: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const IngestionError& e) {
        err << "invalid input: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

RunConfig load_with_overrides(const std::filesystem::path& config_path, const Overrides& overrides)
{
    RunConfig cfg = load_run_config(config_path);
    if (overrides.seed) {
        cfg.seed = *overrides.seed;
        cfg.opt.seed = *overrides.seed;
    }
    cfg.validate();
    return cfg;
}

ExperimentResult run_config(const RunConfig& cfg, const std::filesystem::path& dir)
{
    TaskStream stream = build_stream(cfg.stream);
    ExperimentOptions options;
    options.output_dir = dir;
    options.write_checkpoints = cfg.write_checkpoints;
    return run_experiment(stream, cfg.architecture(), cfg.reg, cfg.opt, cfg.seed, options);
}

} // namespace

std::filesystem::path output_dir_for(const std::filesystem::path& config_path, const std::filesystem::path& configured,
                                     const Overrides& overrides)
{
    if (overrides.out)
        return *overrides.out;
    if (!configured.empty())
        return configured;
    const char* root = std::getenv(kOutputRootEnv);
    const std::filesystem::path base = root && *root ? std::filesystem::path(root) : std::filesystem::path("runs");
    return base / config_path.stem();
}

int cmd_run(const std::filesystem::path& config_path, const Overrides& overrides, std::ostream& out,
            std::ostream& err)
{
    return guarded(err, [&] {
        const RunConfig cfg = load_with_overrides(config_path, overrides);
        const auto dir = output_dir_for(config_path, cfg.output_dir, overrides);
        std::filesystem::create_directories(dir);
        write_file_atomic(dir / "config.json", to_json(cfg).dump(2) + "\n");
        const ExperimentResult res = run_config(cfg, dir);
        const std::size_t last = res.metrics.num_tasks() - 1;
        out << "tasks " << res.metrics.num_tasks() << ", A = " << format_number(average_accuracy(res.metrics, last));
        if (res.metrics.num_tasks() >= 2)
            out << ", F = " << format_number(average_forgetting(res.metrics));
        out << "\nwrote " << (dir / "metrics.json").string() << '\n';
        return kExitOk;
    });
}

int cmd_ablate(const std::filesystem::path& config_path, const std::filesystem::path& grid_path,
               const Overrides& overrides, std::ostream& out, std::ostream& err)
{
    return guarded(err, [&] {
        const RunConfig base = load_with_overrides(config_path, overrides);
        const auto grid = load_grid(grid_path);
        const auto dir = output_dir_for(config_path, base.output_dir, overrides);
        std::filesystem::create_directories(dir);
        std::string csv = "mu_s_on,mu_p_on,nu_on,A,F\n";
        write_file_atomic(dir / "ablation.csv", csv);
        int status = kExitOk;
        for (std::size_t r = 0; r < grid.size(); ++r) {
            const AblationVariant& v = grid[r];
            const std::string flags = std::string(v.mu_s ? "1" : "0") + "," + (v.mu_p ? "1" : "0") + "," +
                                      (v.nu ? "1" : "0");
            const auto sub = dir / ("variant_" + std::to_string(r + 1));
            try {
                const RunConfig cfg = apply_variant(base, v);
                std::filesystem::create_directories(sub);
                write_file_atomic(sub / "config.json", to_json(cfg).dump(2) + "\n");
                const ExperimentResult res = run_config(cfg, sub);
                const std::size_t last = res.metrics.num_tasks() - 1;
                const std::string a = format_number(average_accuracy(res.metrics, last));
                const std::string f =
                    res.metrics.num_tasks() >= 2 ? format_number(average_forgetting(res.metrics)) : "";
                csv += flags + "," + a + "," + f + "\n";
                out << "variant " << r + 1 << " (" << flags << "): A = " << a << ", F = " << f << '\n';
            } catch (const std::exception& e) {
                err << "variant " << r + 1 << " failed: " << e.what() << '\n';
                csv += flags + ",,\n";
                status = kExitFailure;
            }
            write_file_atomic(dir / "ablation.csv", csv);
        }
        out << "wrote " << (dir / "ablation.csv").string() << '\n';
        return status;
    });
}

int cmd_export_plots(const std::filesystem::path& run_dir, const std::optional<std::filesystem::path>& dest,
                     std::ostream& out, std::ostream& err)
{
    const auto metrics_path = run_dir / "metrics.json";
    std::ifstream in(metrics_path);
    if (!in) {
        err << "invalid input: " << metrics_path.string() << " not found\n";
        return kExitInvalid;
    }
    return guarded(err, [&] {
        std::stringstream ss;
        ss << in.rdbuf();
        const MetricsMatrix m = parse_metrics_json(ss.str());
        const auto target = dest.value_or(run_dir);
        write_plot_csvs(target, m);
        out << "wrote " << m.num_tasks() << " retention files and average_accuracy.csv to " << target.string()
            << '\n';
        return kExitOk;
    });
}

int main(int argc, char** argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Continual learning with filter-level stability and plasticity regularization"};
    app.require_subcommand(1);
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    int threads = 0;
    app.add_option("--seed", seed, "Override the run seed");
    app.add_option("--out", out_dir,
                   "Output directory (default: config output_dir, else $GESCL_OUTPUT_ROOT/<config name>, "
                   "else runs/<config name>)");
    app.add_option("--threads", threads, "OpenMP threads (0 = runtime default)")->check(CLI::NonNegativeNumber);

    std::string config, grid, run_dir;
    auto* run = app.add_subcommand("run", "Train the task stream described by a config file");
    run->add_option("config", config, "JSON run config")->required();
    auto* ablate = app.add_subcommand("ablate", "Run one experiment per component on/off variant");
    ablate->add_option("config", config, "JSON run config")->required();
    ablate->add_option("grid", grid, "JSON grid of variants")->required();
    auto* plots = app.add_subcommand("export-plots", "Write retention and average-accuracy CSVs from metrics.json");
    plots->add_option("dir", run_dir, "Completed run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitInvalid;
    }
    if (threads > 0)
        omp_set_num_threads(threads);
    Overrides ov;
    ov.seed = seed;
    if (out_dir)
        ov.out = std::filesystem::path(*out_dir);
    if (*run)
        return cmd_run(config, ov, out, err);
    if (*ablate)
        return cmd_ablate(config, grid, ov, out, err);
    return cmd_export_plots(run_dir, ov.out, out, err);
}

} // namespace gescl::cli
