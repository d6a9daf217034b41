// SPDX-License-Identifier: Apache-2.0
#include "gescl/checkpoint.hpp"
#include "gescl/errors.hpp"
#include "gescl/harness.hpp"

#include "support/fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

using namespace gescl;
namespace fs = std::filesystem;

namespace {

MetricsMatrix matrix(const std::vector<std::vector<double>>& rows)
{
    MetricsMatrix m(rows.size());
    for (std::size_t t = 0; t < rows.size(); ++t)
        for (std::size_t k = 0; k < rows[t].size(); ++k)
            m.set(t, k, rows[t][k]);
    return m;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ArchitectureSpec small_arch()
{
    ArchitectureSpec a;
    a.blocks = {{3, 4}, {3, 6}};
    return a;
}

} // namespace

TEST_CASE("average accuracy")
{
    CHECK(average_accuracy(matrix({{1.0}, {0.9, 0.8}}), 1) == doctest::Approx(0.85).epsilon(1e-15));
    CHECK(average_accuracy(matrix({{1.0}, {1.0, 1.0}, {1.0, 1.0, 1.0}}), 2) == 1.0);
    CHECK(average_accuracy(matrix({{0.625}}), 0) == 0.625);
    MetricsMatrix partial(2);
    partial.set(1, 0, 0.5);
    CHECK_THROWS_AS(average_accuracy(partial, 1), StateError);
}

TEST_CASE("average forgetting")
{
    CHECK(average_forgetting(matrix({{0.5}, {0.6, 0.7}, {0.8, 0.7, 0.9}})) == 0.0);
    // Task 1 peaks at 0.9 and ends at 0.85; task 2 flat.
    CHECK(average_forgetting(matrix({{0.9}, {0.88, 0.7}, {0.85, 0.7, 0.6}})) ==
          doctest::Approx(0.025).epsilon(1e-14));
    CHECK(average_forgetting(matrix({{0.9}, {0.7, 0.95}})) == doctest::Approx(0.2).epsilon(1e-14));
    CHECK_THROWS_AS(average_forgetting(matrix({{0.9}})), StateError);
    MetricsMatrix partial(2);
    partial.set(0, 0, 0.5);
    CHECK_THROWS_AS(average_forgetting(partial), StateError);
}

TEST_CASE("metrics matrix bounds")
{
    MetricsMatrix m(3);
    CHECK_THROWS_AS(m.set(0, 1, 0.5), InputError);
    CHECK_THROWS_AS(m.set(1, 0, 1.5), InputError);
    CHECK_THROWS_AS(m.set(3, 0, 0.5), InputError);
    CHECK(!m.get(2, 1).has_value());
}

TEST_CASE("retention curve")
{
    const auto m = matrix({{0.9}, {0.8, 0.7}, {0.7, 0.7, 0.7}, {0.6, 0.7, 0.7, 0.7}, {0.5, 0.7, 0.7, 0.7, 0.7}});
    const auto r = retention_curve(m, 0);
    CHECK(r.size() == 5);
    CHECK(r.front() == std::pair<std::size_t, double>{0, 0.9});
    const auto flat = retention_curve(m, 1);
    CHECK(flat.size() == 4);
    for (const auto& [t, a] : flat)
        CHECK(a == 0.7);
}

TEST_CASE("metrics json round trip")
{
    const auto m = matrix({{0.9}, {0.1 + 0.2, 0.7}});
    const auto back = parse_metrics_json(metrics_json(m));
    CHECK(back == m);
    CHECK(metrics_json(matrix({{0.5}})).find("\"average_forgetting\": null") != std::string::npos);
}

TEST_CASE("evaluate")
{
    auto net = build_network(testing::tiny_arch(), 1);
    net.add_head(2);
    auto data = testing::random_set(400, {1, 8, 8, 2}, 2, 2);

    SUBCASE("labels equal to the predictions give 1.0")
    {
        const auto fp = forward(net, data.images, 0, {.record_tape = false});
        for (std::size_t n = 0; n < data.size(); ++n)
            data.labels[n] = fp.logits(n, 0, 0, 1) > fp.logits(n, 0, 0, 0) ? 1 : 0;
        CHECK(evaluate(net, data, 0, 64) == 1.0);
        CHECK(evaluate(net, data.slice(3, 4), 0) == 1.0);
    }
    SUBCASE("untrained head on balanced labels is near chance")
    {
        for (std::size_t n = 0; n < data.size(); ++n)
            data.labels[n] = n % 2;
        const double acc = evaluate(net, data, 0);
        const double sigma = std::sqrt(0.25 / 400.0);
        CHECK(std::abs(acc - 0.5) <= 3.0 * sigma);
    }
    CHECK_THROWS_AS(evaluate(net, LabeledSet{}, 0), InputError);
}

TEST_CASE("run_experiment")
{
    const auto spec = testing::tiny_stream_spec(2, 4);
    RegularizerConfig reg;
    reg.mu_s = 1.0;
    reg.mu_p = 0.05;
    OptimizerConfig opt;
    opt.alpha = 0.05;
    opt.epochs = 2;
    opt.batch_size = 8;

    SUBCASE("after_step sees every step and evaluation runs before pruning")
    {
        auto stream = build_stream(spec);
        std::vector<std::string> seen;
        ExperimentOptions options;
        options.after_step = [&](std::string_view step, std::size_t t, const MultiHeadNetwork& net) {
            seen.push_back(std::string(step) + ":" + std::to_string(t));
            if (step == "add_head")
                CHECK(net.num_heads() == t + 1);
        };
        const auto res = run_experiment(stream, small_arch(), reg, opt, 7, options);
        CHECK(seen == res.events);
        CHECK(seen.size() == 20);
    }

    SUBCASE("calls each step in order for every task")
    {
        auto stream = build_stream(spec);
        const auto dir = fs::temp_directory_path() / "gescl_harness_trace";
        fs::remove_all(dir);
        const auto res = run_experiment(stream, small_arch(), reg, opt, 7, {.output_dir = dir});
        std::vector<std::string> want;
        for (int t = 0; t < 2; ++t)
            for (const char* step : {"add_head", "train_task", "collect_stats", "filter_importance",
                                     "accumulate_importance", "binarize", "release_train", "evaluate",
                                     "prune_and_reinit", "capture_anchors", "checkpoint"})
                want.push_back(std::string(step) + ":" + std::to_string(t));
        CHECK(res.events == want);
        CHECK(res.metrics.completed_rows() == 2);
        CHECK(res.log.size() == 4);
        CHECK(res.prunes.size() == 2);
        for (const auto& task : stream.tasks)
            CHECK(task.train_released());

        CHECK(fs::exists(dir / "metrics.json"));
        CHECK(fs::exists(dir / "retention_task1.csv"));
        CHECK(fs::exists(dir / "retention_task2.csv"));
        CHECK(fs::exists(dir / "checkpoints" / "task_1.ckpt"));
        CHECK(parse_metrics_json(slurp(dir / "metrics.json")) == res.metrics);

        std::ifstream log(dir / "train_log.jsonl");
        std::string line;
        std::size_t lines = 0, prunes = 0;
        while (std::getline(log, line)) {
            ++lines;
            prunes += line.find("\"prune\"") != std::string::npos ? 1 : 0;
        }
        CHECK(lines == 6);
        CHECK(prunes == 2);

        const auto ckpt = load_checkpoint(dir / "checkpoints" / "task_2.ckpt");
        CHECK(ckpt.completed_tasks == 2);
        CHECK(ckpt.run_seed == 7);
        CHECK(ckpt.network == res.network);
        CHECK(ckpt.importance == res.importance);
        const auto x = testing::random_tensor({4, 12, 12, 1}, 3);
        CHECK(forward(ckpt.network, x, 1, {.record_tape = false}).logits ==
              forward(res.network, x, 1, {.record_tape = false}).logits);
    }
    SUBCASE("same seed and config, same results")
    {
        auto a = build_stream(spec);
        auto b = build_stream(spec);
        const auto ra = run_experiment(a, small_arch(), reg, opt, 3);
        const auto rb = run_experiment(b, small_arch(), reg, opt, 3);
        CHECK(ra.metrics == rb.metrics);
        CHECK(ra.network == rb.network);
        CHECK(metrics_json(ra.metrics) == metrics_json(rb.metrics));
    }
    SUBCASE("no regularization is plain fine-tuning")
    {
        auto stream = build_stream(spec);
        const auto res = run_experiment(stream, small_arch(), RegularizerConfig{}, opt, 3);
        for (const auto& rec : res.log) {
            CHECK(rec.clipped_filters == 0);
            for (const auto& r : rec.prox) {
                CHECK(r.beta == 0.0);
                CHECK(r.xi == 0.0);
            }
        }
    }
    SUBCASE("a consumed stream is rejected")
    {
        auto stream = build_stream(spec);
        run_experiment(stream, small_arch(), reg, opt, 3);
        CHECK_THROWS_AS(run_experiment(stream, small_arch(), reg, opt, 3), StateError);
    }
}

TEST_CASE("checkpoint files")
{
    auto net = build_network(testing::tiny_arch(), 9);
    net.add_head(2);
    net.add_head(3);
    Checkpoint c{2, 99, net, ImportanceState::initial(net.filters_per_layer(), 0.5, 1e-8)};
    c.importance.accumulated[0][1] = 0.1 + 0.2;
    const auto p = fs::temp_directory_path() / "gescl_ckpt" / "one.ckpt";
    save_checkpoint(p, c);
    const auto back = load_checkpoint(p);
    CHECK(back.network == net);
    CHECK(back.importance == c.importance);
    CHECK(!fs::exists(fs::path(p.string() + ".tmp")));

    std::string bytes = slurp(p);
    CHECK(bytes.substr(0, 8) == "GESCLCKP");
    {
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 5));
    }
    CHECK_THROWS_AS(load_checkpoint(p), IngestionError);
    CHECK_THROWS_AS(load_checkpoint(p.parent_path() / "absent.ckpt"), IngestionError);
}
