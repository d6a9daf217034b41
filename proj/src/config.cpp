// SPDX-License-Identifier: Apache-2.0
#include "gescl/config.hpp"

#include "gescl/errors.hpp"

#include <fstream>
#include <set>

namespace gescl {

namespace {

using nlohmann::json;

void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys)
{
    if (!j.is_object())
        throw ConfigError(where + " must be an object");
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k))
            throw ConfigError("unknown key " + where + "." + k);
}

template <class T>
void read(const json& j, const char* key, const std::string& where, T& out)
{
    if (!j.contains(key))
        return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + " has the wrong type");
    }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p)
{
    const std::filesystem::path path(p);
    return (path.is_absolute() ? path : base / path).lexically_normal();
}

} // namespace

ArchitectureSpec RunConfig::architecture() const
{
    const auto& s = stream.synthetic;
    ArchitectureSpec a;
    if (preset == "three_block")
        a = ArchitectureSpec::three_block(s.height, s.width, s.channels);
    else if (preset == "two_block")
        a = ArchitectureSpec::two_block(s.height, s.width, s.channels);
    else if (preset == "custom") {
        a.height = s.height;
        a.width = s.width;
        a.channels = s.channels;
        a.blocks = blocks;
    } else
        throw ConfigError("architecture.preset must be three_block, two_block or custom");
    return a;
}

void RunConfig::validate() const
{
    if (preset == "custom") {
        if (blocks.size() < 2)
            throw ConfigError("architecture.blocks needs at least two blocks");
        for (const auto& b : blocks)
            if (b.kernel_size == 0 || b.filters == 0)
                throw ConfigError("architecture.blocks entries need kernel >= 1 and filters >= 1");
    } else if (preset != "three_block" && preset != "two_block")
        throw ConfigError("architecture.preset must be three_block, two_block or custom");
    if (stream.source == StreamSpec::Source::synthetic) {
        const auto& s = stream.synthetic;
        if (s.classes < 2)
            throw ConfigError("stream.synthetic.classes must be >= 2");
        if (s.height == 0 || s.width == 0 || s.channels == 0)
            throw ConfigError("stream.synthetic image dims must be >= 1");
        if (s.train_per_class == 0 || s.test_per_class == 0)
            throw ConfigError("stream.synthetic per-class counts must be >= 1");
        if (s.blobs_per_class == 0)
            throw ConfigError("stream.synthetic.blobs_per_class must be >= 1");
        if (!(s.noise >= 0.0))
            throw ConfigError("stream.synthetic.noise must be >= 0");
        if (preset != "custom")
            architecture().validate();
    } else {
        for (const auto& [name, p] : {std::pair{"train_images", stream.idx.train_images},
                                      std::pair{"train_labels", stream.idx.train_labels},
                                      std::pair{"test_images", stream.idx.test_images},
                                      std::pair{"test_labels", stream.idx.test_labels}})
            if (!std::filesystem::exists(p))
                throw ConfigError(std::string("stream.idx.") + name + " does not exist: " + p.string());
    }
    if (stream.class_groups.empty() && stream.classes_per_task < 2)
        throw ConfigError("stream.classes_per_task must be >= 2");
    reg.validate();
    opt.validate();
}

RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir)
{
    only_keys(j, "config",
              {"architecture", "stream", "regularization", "optimizer", "seed", "output_dir", "write_checkpoints"});
    RunConfig c;
    if (j.contains("architecture")) {
        const auto& a = j.at("architecture");
        only_keys(a, "architecture", {"preset", "blocks"});
        read(a, "preset", "architecture", c.preset);
        if (a.contains("blocks")) {
            if (!a.at("blocks").is_array())
                throw ConfigError("architecture.blocks must be an array");
            for (const auto& b : a.at("blocks")) {
                only_keys(b, "architecture.blocks[]", {"kernel", "filters"});
                ConvBlockSpec spec;
                read(b, "kernel", "architecture.blocks[]", spec.kernel_size);
                read(b, "filters", "architecture.blocks[]", spec.filters);
                c.blocks.push_back(spec);
            }
            if (!a.contains("preset"))
                c.preset = "custom";
        }
    }
    if (j.contains("stream")) {
        const auto& s = j.at("stream");
        only_keys(s, "stream",
                  {"source", "synthetic", "idx", "class_groups", "classes_per_task", "max_train_per_class",
                   "max_test_per_class"});
        std::string source = "synthetic";
        read(s, "source", "stream", source);
        if (source == "synthetic")
            c.stream.source = StreamSpec::Source::synthetic;
        else if (source == "idx")
            c.stream.source = StreamSpec::Source::idx;
        else
            throw ConfigError("stream.source must be synthetic or idx");
        read(s, "class_groups", "stream", c.stream.class_groups);
        read(s, "classes_per_task", "stream", c.stream.classes_per_task);
        read(s, "max_train_per_class", "stream", c.stream.max_train_per_class);
        read(s, "max_test_per_class", "stream", c.stream.max_test_per_class);
        if (s.contains("synthetic")) {
            const auto& g = s.at("synthetic");
            const std::string w = "stream.synthetic";
            only_keys(g, w,
                      {"classes", "height", "width", "channels", "train_per_class", "test_per_class",
                       "blobs_per_class", "noise", "jitter", "seed"});
            auto& y = c.stream.synthetic;
            read(g, "classes", w, y.classes);
            read(g, "height", w, y.height);
            read(g, "width", w, y.width);
            read(g, "channels", w, y.channels);
            read(g, "train_per_class", w, y.train_per_class);
            read(g, "test_per_class", w, y.test_per_class);
            read(g, "blobs_per_class", w, y.blobs_per_class);
            read(g, "noise", w, y.noise);
            read(g, "jitter", w, y.jitter);
            read(g, "seed", w, y.seed);
        }
        if (s.contains("idx")) {
            const auto& x = s.at("idx");
            only_keys(x, "stream.idx", {"train_images", "train_labels", "test_images", "test_labels"});
            std::string a, b, d, e;
            read(x, "train_images", "stream.idx", a);
            read(x, "train_labels", "stream.idx", b);
            read(x, "test_images", "stream.idx", d);
            read(x, "test_labels", "stream.idx", e);
            c.stream.idx = {resolve(base_dir, a), resolve(base_dir, b), resolve(base_dir, d), resolve(base_dir, e)};
        } else if (c.stream.source == StreamSpec::Source::idx) {
            throw ConfigError("stream.idx is required when stream.source is idx");
        }
    }
    if (j.contains("regularization")) {
        const auto& r = j.at("regularization");
        only_keys(r, "regularization", {"mu_s", "mu_p", "nu", "epsilon"});
        read(r, "mu_s", "regularization", c.reg.mu_s);
        read(r, "mu_p", "regularization", c.reg.mu_p);
        read(r, "nu", "regularization", c.reg.nu);
        read(r, "epsilon", "regularization", c.reg.epsilon);
    }
    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        only_keys(o, "optimizer", {"alpha", "epochs", "batch_size", "clip_prox"});
        read(o, "alpha", "optimizer", c.opt.alpha);
        read(o, "epochs", "optimizer", c.opt.epochs);
        read(o, "batch_size", "optimizer", c.opt.batch_size);
        read(o, "clip_prox", "optimizer", c.opt.clip_prox);
    }
    read(j, "seed", "config", c.seed);
    c.opt.seed = c.seed;
    if (j.contains("output_dir")) {
        std::string out;
        read(j, "output_dir", "config", out);
        if (!out.empty())
            c.output_dir = resolve(base_dir, out);
    }
    read(j, "write_checkpoints", "config", c.write_checkpoints);
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_run_config(j, std::filesystem::absolute(path).parent_path());
}

json to_json(const RunConfig& c)
{
    json arch = {{"preset", c.preset}};
    if (c.preset == "custom") {
        json blocks = json::array();
        for (const auto& b : c.blocks)
            blocks.push_back({{"kernel", b.kernel_size}, {"filters", b.filters}});
        arch["blocks"] = blocks;
    }
    const auto& y = c.stream.synthetic;
    json stream = {
        {"source", c.stream.source == StreamSpec::Source::synthetic ? "synthetic" : "idx"},
        {"classes_per_task", c.stream.classes_per_task},
        {"max_train_per_class", c.stream.max_train_per_class},
        {"max_test_per_class", c.stream.max_test_per_class},
        {"synthetic",
         {{"classes", y.classes},
          {"height", y.height},
          {"width", y.width},
          {"channels", y.channels},
          {"train_per_class", y.train_per_class},
          {"test_per_class", y.test_per_class},
          {"blobs_per_class", y.blobs_per_class},
          {"noise", y.noise},
          {"jitter", y.jitter},
          {"seed", y.seed}}},
    };
    if (!c.stream.class_groups.empty())
        stream["class_groups"] = c.stream.class_groups;
    if (c.stream.source == StreamSpec::Source::idx)
        stream["idx"] = {{"train_images", c.stream.idx.train_images.string()},
                         {"train_labels", c.stream.idx.train_labels.string()},
                         {"test_images", c.stream.idx.test_images.string()},
                         {"test_labels", c.stream.idx.test_labels.string()}};
    json out = {
        {"architecture", arch},
        {"stream", stream},
        {"regularization", {{"mu_s", c.reg.mu_s}, {"mu_p", c.reg.mu_p}, {"nu", c.reg.nu}, {"epsilon", c.reg.epsilon}}},
        {"optimizer",
         {{"alpha", c.opt.alpha}, {"epochs", c.opt.epochs}, {"batch_size", c.opt.batch_size}, {"clip_prox", c.opt.clip_prox}}},
        {"seed", c.seed},
        {"write_checkpoints", c.write_checkpoints},
    };
    if (!c.output_dir.empty())
        out["output_dir"] = c.output_dir.string();
    return out;
}

std::vector<AblationVariant> parse_grid(const json& j)
{
    only_keys(j, "grid", {"variants"});
    if (!j.contains("variants") || !j.at("variants").is_array() || j.at("variants").empty())
        throw ConfigError("grid.variants must be a non-empty array");
    std::vector<AblationVariant> out;
    for (const auto& v : j.at("variants")) {
        only_keys(v, "grid.variants[]", {"mu_s", "mu_p", "nu"});
        AblationVariant a;
        read(v, "mu_s", "grid.variants[]", a.mu_s);
        read(v, "mu_p", "grid.variants[]", a.mu_p);
        read(v, "nu", "grid.variants[]", a.nu);
        out.push_back(a);
    }
    return out;
}

std::vector<AblationVariant> load_grid(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open grid " + path.string());
    try {
        return parse_grid(json::parse(in));
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

RunConfig apply_variant(const RunConfig& cfg, const AblationVariant& v)
{
    RunConfig out = cfg;
    if (!v.mu_s)
        out.reg.mu_s = 0.0;
    if (!v.mu_p)
        out.reg.mu_p = 0.0;
    if (!v.nu)
        out.reg.nu = 0.0;
    return out;
}

} // namespace gescl
