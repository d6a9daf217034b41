// SPDX-License-Identifier: Apache-2.0
#include "gescl/harness.hpp"

#include "gescl/checkpoint.hpp"
#include "gescl/errors.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>

namespace gescl {

double evaluate(const MultiHeadNetwork& net, const LabeledSet& test, std::size_t head, std::size_t batch_size)
{
    if (test.empty())
        throw InputError("evaluate needs a non-empty test set");
    std::size_t correct = 0;
    for (std::size_t b = 0; b < test.size(); b += batch_size) {
        const LabeledSet chunk = test.slice(b, std::min(test.size(), b + batch_size));
        const ForwardPass fp = forward(net, chunk.images, head, {.record_tape = false});
        const std::size_t classes = fp.logits.dim(3);
        for (std::size_t n = 0; n < chunk.size(); ++n) {
            const double* row = fp.logits.data() + n * classes;
            std::size_t best = 0;
            for (std::size_t c = 1; c < classes; ++c)
                if (row[c] > row[best])
                    best = c;
            correct += best == chunk.labels[n] ? 1 : 0;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

ArchitectureSpec fit_architecture(const ArchitectureSpec& blocks_from, const TaskStream& stream)
{
    const Dims4 d = stream.image_dims();
    ArchitectureSpec a = blocks_from;
    a.height = d[1];
    a.width = d[2];
    a.channels = d[3];
    a.validate();
    return a;
}

std::string format_number(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

nlohmann::json epoch_json(const EpochRecord& r)
{
    return {{"task", r.task},
            {"epoch", r.epoch},
            {"ce_loss", r.ce_loss},
            {"stab_penalty", r.stab_penalty},
            {"plast_penalty", r.plast_penalty},
            {"clipped_filter_count", r.clipped_filters},
            {"zeroed_filter_count", r.zeroed_filters}};
}

nlohmann::json prune_json(const PruneReport& p)
{
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : p.layers)
        layers.push_back({{"pruned", l.pruned}, {"kept", l.kept}, {"sparsity", l.sparsity}});
    return {{"task", p.task}, {"prune", layers}};
}

void write_retention(const std::filesystem::path& dir, const MetricsMatrix& m)
{
    for (std::size_t k = 0; k < m.num_tasks(); ++k) {
        std::string csv = "after_task,accuracy\n";
        for (const auto& [t, a] : retention_curve(m, k))
            csv += std::to_string(t + 1) + "," + format_number(a) + "\n";
        write_file_atomic(dir / ("retention_task" + std::to_string(k + 1) + ".csv"), csv);
    }
}

void append_line(const std::filesystem::path& path, const nlohmann::json& j)
{
    std::ofstream out(path, std::ios::app);
    if (!out)
        throw Error("cannot append to " + path.string());
    out << j.dump() << '\n';
}

} // namespace

ExperimentResult run_experiment(TaskStream& stream, const ArchitectureSpec& arch, const RegularizerConfig& reg,
                                const OptimizerConfig& opt, std::uint64_t seed, const ExperimentOptions& options)
{
    reg.validate();
    opt.validate();
    if (stream.tasks.empty())
        throw InputError("empty task stream");
    for (const auto& task : stream.tasks)
        if (task.train_released())
            throw StateError("task stream was already consumed");
    const ArchitectureSpec fitted = fit_architecture(arch, stream);

    OptimizerConfig task_opt = opt;
    task_opt.seed = seed;
    const std::size_t tasks = stream.size();
    ExperimentResult res{MetricsMatrix(tasks), {}, {}, {}, build_network(fitted, seed), {}, {}};
    MultiHeadNetwork& net = res.network;
    res.importance = ImportanceState::initial(net.filters_per_layer(), reg.nu, reg.epsilon);
    FilterPartition partition = FilterPartition::all_unimportant(net.filters_per_layer());
    AnchorStore anchors;

    const bool writing = !options.output_dir.empty();
    const std::filesystem::path log_path = options.output_dir / "train_log.jsonl";
    if (writing) {
        std::filesystem::create_directories(options.output_dir);
        std::ofstream(log_path, std::ios::trunc);
    }
    auto done = [&](const char* name, std::size_t t) {
        res.events.push_back(std::string(name) + ":" + std::to_string(t));
        if (options.after_step)
            options.after_step(name, t, net);
    };

    for (std::size_t t = 0; t < tasks; ++t) {
        TaskDataset& task = stream.tasks[t];
        const std::size_t head = net.add_head(task.num_classes());
        done("add_head", t);

        auto epochs = train_task(net, task.train(), head, t, anchors, res.importance, partition, reg, task_opt);
        done("train_task", t);

        const ActivationStats stats = collect_stats(net, task.train(), options.stats_batch);
        done("collect_stats", t);
        const PerFilter<double> gamma = filter_importance(stats);
        done("filter_importance", t);
        accumulate_importance(res.importance, gamma);
        done("accumulate_importance", t);
        partition = binarize(res.importance);
        res.partitions.push_back(partition);
        done("binarize", t);

        task.release_train();
        done("release_train", t);

        for (std::size_t k = 0; k <= t; ++k)
            res.metrics.set(t, k, evaluate(net, stream.tasks[k].test(), k, options.eval_batch));
        done("evaluate", t);

        const PruneReport prune = prune_and_reinit(net, partition, seed, t);
        done("prune_and_reinit", t);
        anchors = AnchorStore::capture(net, partition, t);
        done("capture_anchors", t);

        if (writing) {
            for (const auto& e : epochs)
                append_line(log_path, epoch_json(e));
            append_line(log_path, prune_json(prune));
            if (options.write_checkpoints) {
                save_checkpoint(options.output_dir / "checkpoints" / ("task_" + std::to_string(t + 1) + ".ckpt"),
                                Checkpoint{t + 1, seed, net, res.importance});
                done("checkpoint", t);
            }
        }
        res.log.insert(res.log.end(), std::make_move_iterator(epochs.begin()), std::make_move_iterator(epochs.end()));
        res.prunes.push_back(prune);
    }
    if (writing)
        write_metrics(options.output_dir, res.metrics);
    return res;
}

std::string metrics_json(const MetricsMatrix& m)
{
    nlohmann::json rows = nlohmann::json::array();
    nlohmann::json avg = nlohmann::json::array();
    for (std::size_t t = 0; t < m.num_tasks(); ++t) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t k = 0; k <= t; ++k)
            row.push_back(m.at(t, k));
        rows.push_back(row);
        avg.push_back(average_accuracy(m, t));
    }
    nlohmann::json j = {{"num_tasks", m.num_tasks()}, {"accuracy", rows}, {"average_accuracy", avg}};
    j["average_forgetting"] = m.num_tasks() >= 2 ? nlohmann::json(average_forgetting(m)) : nlohmann::json(nullptr);
    return j.dump(2) + "\n";
}

MetricsMatrix parse_metrics_json(const std::string& text)
{
    try {
        const auto j = nlohmann::json::parse(text);
        const auto& rows = j.at("accuracy");
        MetricsMatrix m(rows.size());
        for (std::size_t t = 0; t < rows.size(); ++t) {
            if (rows[t].size() != t + 1)
                throw IngestionError("accuracy row " + std::to_string(t) + " has the wrong length");
            for (std::size_t k = 0; k <= t; ++k)
                m.set(t, k, rows[t][k].get<double>());
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw IngestionError(std::string("metrics.json: ") + e.what());
    }
}

void write_metrics(const std::filesystem::path& dir, const MetricsMatrix& m)
{
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / "metrics.json", metrics_json(m));
    write_retention(dir, m);
}

void write_plot_csvs(const std::filesystem::path& dir, const MetricsMatrix& m)
{
    std::filesystem::create_directories(dir);
    write_retention(dir, m);
    std::string csv = "after_task,average_accuracy\n";
    for (std::size_t t = 0; t < m.num_tasks(); ++t)
        csv += std::to_string(t + 1) + "," + format_number(average_accuracy(m, t)) + "\n";
    write_file_atomic(dir / "average_accuracy.csv", csv);
}

} // namespace gescl
