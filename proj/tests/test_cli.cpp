// SPDX-License-Identifier: Apache-2.0
#include "gescl/cli.hpp"
#include "gescl/config.hpp"
#include "gescl/errors.hpp"
#include "gescl/harness.hpp"

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace gescl;
namespace fs = std::filesystem;

namespace {

const fs::path kDir = fs::temp_directory_path() / "gescl_cli_test";

const char* kTinyConfig = R"({
  "architecture": {"blocks": [{"kernel": 3, "filters": 4}, {"kernel": 3, "filters": 6}]},
  "stream": {"source": "synthetic", "classes_per_task": 2,
             "synthetic": {"classes": 4, "height": 12, "width": 12, "train_per_class": 12,
                           "test_per_class": 6, "seed": 3}},
  "regularization": {"mu_s": 1.0, "mu_p": 0.05, "nu": 1.0},
  "optimizer": {"alpha": 0.05, "epochs": 1, "batch_size": 8},
  "seed": 5
})";

fs::path write(const std::string& name, const std::string& text)
{
    fs::create_directories(kDir);
    const auto p = kDir / name;
    std::ofstream(p) << text;
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_main(std::vector<std::string> args, std::ostream& out, std::ostream& err)
{
    std::vector<char*> argv;
    for (auto& a : args)
        argv.push_back(a.data());
    return cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
}

} // namespace

TEST_CASE("config round trip is idempotent")
{
    const auto once = parse_run_config(nlohmann::json::parse(kTinyConfig), kDir);
    const auto twice = parse_run_config(to_json(once), kDir);
    CHECK(once == twice);
    CHECK(to_json(once) == to_json(twice));
    CHECK(once.preset == "custom");
    CHECK(once.opt.seed == 5);

    const auto defaults = parse_run_config(nlohmann::json::object(), kDir);
    CHECK(defaults.preset == "three_block");
    CHECK(parse_run_config(to_json(defaults), kDir) == defaults);

    auto with_idx = nlohmann::json::parse(kTinyConfig);
    with_idx["stream"]["source"] = "idx";
    with_idx["stream"]["idx"] = {{"train_images", "a.idx"}, {"train_labels", "b.idx"},
                                 {"test_images", "c.idx"}, {"test_labels", "d.idx"}};
    const auto idx = parse_run_config(with_idx, kDir);
    CHECK(idx.stream.idx.train_images == kDir / "a.idx");
    CHECK(parse_run_config(to_json(idx), fs::path("/elsewhere")) == idx);
    CHECK_THROWS_AS(idx.validate(), ConfigError);
}

TEST_CASE("config validation")
{
    auto j = nlohmann::json::parse(kTinyConfig);
    j["regularization"]["mu_s"] = -1.0;
    try {
        parse_run_config(j, kDir).validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("regularization.mu_s") != std::string::npos);
    }
    auto k = nlohmann::json::parse(kTinyConfig);
    k["optimizer"]["learning_rate"] = 0.1;
    CHECK_THROWS_AS(parse_run_config(k, kDir), ConfigError);
    auto t = nlohmann::json::parse(kTinyConfig);
    t["optimizer"]["epochs"] = "three";
    CHECK_THROWS_AS(parse_run_config(t, kDir), ConfigError);
}

TEST_CASE("ablation grid")
{
    const auto g = parse_grid(nlohmann::json::parse(
        R"({"variants": [{"mu_s": true, "mu_p": true, "nu": true}, {"mu_s": false, "mu_p": true, "nu": true}]})"));
    CHECK(g.size() == 2);
    CHECK(!g[1].mu_s);
    const auto cfg = parse_run_config(nlohmann::json::parse(kTinyConfig), kDir);
    const auto off = apply_variant(cfg, AblationVariant{false, false, false});
    CHECK(off.reg.mu_s == 0.0);
    CHECK(off.reg.mu_p == 0.0);
    CHECK(off.reg.nu == 0.0);
    CHECK_THROWS_AS(parse_grid(nlohmann::json::parse(R"({"variants": []})")), ConfigError);
}

TEST_CASE("output directory precedence")
{
    cli::Overrides none;
    ::unsetenv(cli::kOutputRootEnv);
    CHECK(cli::output_dir_for("cfg/exp.json", "", none) == fs::path("runs") / "exp");
    ::setenv(cli::kOutputRootEnv, "/tmp/root", 1);
    CHECK(cli::output_dir_for("cfg/exp.json", "", none) == fs::path("/tmp/root") / "exp");
    CHECK(cli::output_dir_for("cfg/exp.json", "/x/y", none) == fs::path("/x/y"));
    cli::Overrides out;
    out.out = "/z";
    CHECK(cli::output_dir_for("cfg/exp.json", "/x/y", out) == fs::path("/z"));
    ::unsetenv(cli::kOutputRootEnv);
}

TEST_CASE("run, export-plots and ablate")
{
    fs::remove_all(kDir);
    const auto cfg = write("tiny.json", kTinyConfig);
    std::ostringstream out, err;
    cli::Overrides ov;
    ov.out = kDir / "run";
    REQUIRE(cli::cmd_run(cfg, ov, out, err) == cli::kExitOk);
    CHECK(fs::exists(kDir / "run" / "metrics.json"));
    CHECK(fs::exists(kDir / "run" / "config.json"));

    SUBCASE("export-plots derives every value from metrics.json")
    {
        REQUIRE(cli::cmd_export_plots(kDir / "run", kDir / "plots", out, err) == cli::kExitOk);
        CHECK(fs::exists(kDir / "plots" / "retention_task1.csv"));
        CHECK(fs::exists(kDir / "plots" / "retention_task2.csv"));
        const auto m = parse_metrics_json(slurp(kDir / "run" / "metrics.json"));
        std::istringstream csv(slurp(kDir / "plots" / "average_accuracy.csv"));
        std::string line;
        std::getline(csv, line);
        CHECK(line == "after_task,average_accuracy");
        for (std::size_t t = 0; t < 2; ++t) {
            REQUIRE(std::getline(csv, line));
            const auto comma = line.find(',');
            CHECK(std::stoul(line.substr(0, comma)) == t + 1);
            CHECK(std::stod(line.substr(comma + 1)) == average_accuracy(m, t));
        }
        CHECK(cli::cmd_export_plots(kDir / "nowhere", std::nullopt, out, err) == cli::kExitInvalid);
    }
    SUBCASE("same config and seed give byte-identical metrics")
    {
        cli::Overrides again;
        again.out = kDir / "run2";
        REQUIRE(cli::cmd_run(cfg, again, out, err) == cli::kExitOk);
        CHECK(slurp(kDir / "run" / "metrics.json") == slurp(kDir / "run2" / "metrics.json"));
    }
    SUBCASE("ablate writes one row per variant")
    {
        const auto grid = write("grid.json", R"({"variants": [{"mu_s": true, "mu_p": true, "nu": true},
                                                             {"mu_s": false, "mu_p": false, "nu": false}]})");
        cli::Overrides ab;
        ab.out = kDir / "ablate";
        REQUIRE(cli::cmd_ablate(cfg, grid, ab, out, err) == cli::kExitOk);
        std::istringstream csv(slurp(kDir / "ablate" / "ablation.csv"));
        std::string line;
        std::getline(csv, line);
        CHECK(line == "mu_s_on,mu_p_on,nu_on,A,F");
        std::getline(csv, line);
        CHECK(line.rfind("1,1,1,", 0) == 0);
        std::getline(csv, line);
        CHECK(line.rfind("0,0,0,", 0) == 0);
        CHECK(fs::exists(kDir / "ablate" / "variant_2" / "metrics.json"));
    }
}

TEST_CASE("invalid input exits with 2")
{
    std::ostringstream out, err;
    auto j = nlohmann::json::parse(kTinyConfig);
    j["regularization"]["mu_s"] = -0.5;
    const auto bad = write("bad.json", j.dump());
    CHECK(cli::cmd_run(bad, {}, out, err) == cli::kExitInvalid);
    CHECK(err.str().find("regularization.mu_s") != std::string::npos);
    CHECK(cli::cmd_run(kDir / "missing.json", {}, out, err) == cli::kExitInvalid);
    const auto broken = write("broken.json", "{ not json");
    CHECK(cli::cmd_run(broken, {}, out, err) == cli::kExitInvalid);

    CHECK(run_main({"gescl"}, out, err) == cli::kExitInvalid);
    CHECK(run_main({"gescl", "frobnicate"}, out, err) == cli::kExitInvalid);
    CHECK(run_main({"gescl", "--help"}, out, err) == cli::kExitOk);
}
