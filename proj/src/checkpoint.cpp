// SPDX-License-Identifier: Apache-2.0
#include "gescl/checkpoint.hpp"

#include "gescl/errors.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace gescl {

namespace {

constexpr char kMagic[8] = {'G', 'E', 'S', 'C', 'L', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put_le(std::string& out, T v)
{
    for (std::size_t b = 0; b < sizeof(T); ++b)
        out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

template <class T>
T get_le(const std::string& in, std::size_t& pos)
{
    if (pos + sizeof(T) > in.size())
        throw IngestionError("checkpoint is truncated");
    T v = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b)
        v |= static_cast<T>(static_cast<unsigned char>(in[pos + b])) << (8 * b);
    pos += sizeof(T);
    return v;
}

nlohmann::json arch_json(const ArchitectureSpec& a)
{
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& b : a.blocks)
        blocks.push_back({{"kernel", b.kernel_size}, {"filters", b.filters}});
    return {{"height", a.height}, {"width", a.width}, {"channels", a.channels}, {"blocks", blocks}};
}

} // namespace

void write_file_atomic(const std::filesystem::path& path, const std::string& contents)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error("cannot write " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out)
            throw Error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt)
{
    const MultiHeadNetwork& net = ckpt.network;
    nlohmann::json heads = nlohmann::json::array();
    for (const auto& h : net.heads())
        heads.push_back({{"features", h.features}, {"classes", h.classes}, {"frozen", h.frozen}});
    const nlohmann::json header = {
        {"completed_tasks", ckpt.completed_tasks},
        {"run_seed", ckpt.run_seed},
        {"init_seed", net.seed()},
        {"architecture", arch_json(net.arch())},
        {"heads", heads},
        {"importance",
         {{"nu", ckpt.importance.nu},
          {"epsilon", ckpt.importance.epsilon},
          {"current", ckpt.importance.current},
          {"accumulated", ckpt.importance.accumulated}}},
    };
    std::vector<double> values;
    for (const auto& l : net.layers()) {
        values.insert(values.end(), l.kernel.values().begin(), l.kernel.values().end());
        values.insert(values.end(), l.bias.begin(), l.bias.end());
    }
    for (const auto& h : net.heads()) {
        values.insert(values.end(), h.weights.begin(), h.weights.end());
        values.insert(values.end(), h.bias.begin(), h.bias.end());
    }
    const std::string text = header.dump();
    std::string out(kMagic, sizeof(kMagic));
    put_le<std::uint32_t>(out, kVersion);
    put_le<std::uint64_t>(out, text.size());
    out += text;
    put_le<std::uint64_t>(out, values.size());
    for (double v : values)
        put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    write_file_atomic(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IngestionError("cannot open checkpoint " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string data = ss.str();
    if (data.size() < sizeof(kMagic) || std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0)
        throw IngestionError(path.string() + " is not a checkpoint");
    std::size_t pos = sizeof(kMagic);
    const auto version = get_le<std::uint32_t>(data, pos);
    if (version != kVersion)
        throw IngestionError("unsupported checkpoint version " + std::to_string(version));
    const auto header_len = get_le<std::uint64_t>(data, pos);
    if (pos + header_len > data.size())
        throw IngestionError("checkpoint header is truncated");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(data.substr(pos, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw IngestionError(std::string("checkpoint header: ") + e.what());
    }
    pos += header_len;
    const auto count = get_le<std::uint64_t>(data, pos);
    if (pos + count * 8 != data.size())
        throw IngestionError("checkpoint payload length does not match its header");
    std::size_t next = 0;
    auto take = [&](std::size_t n) {
        if (next + n > count)
            throw IngestionError("checkpoint payload is shorter than the declared shapes");
        std::vector<double> v(n);
        for (auto& x : v)
            x = std::bit_cast<double>(get_le<std::uint64_t>(data, pos));
        next += n;
        return v;
    };
    try {
        const auto& a = header.at("architecture");
        ArchitectureSpec arch;
        arch.height = a.at("height");
        arch.width = a.at("width");
        arch.channels = a.at("channels");
        for (const auto& b : a.at("blocks"))
            arch.blocks.push_back({b.at("kernel").get<std::size_t>(), b.at("filters").get<std::size_t>()});
        arch.validate();
        std::vector<LayerParams> layers;
        std::size_t cin = arch.channels;
        for (const auto& b : arch.blocks) {
            LayerParams l;
            const Dims4 d{b.kernel_size, b.kernel_size, cin, b.filters};
            l.kernel = Tensor4(d, take(d[0] * d[1] * d[2] * d[3]));
            l.bias = take(b.filters);
            layers.push_back(std::move(l));
            cin = b.filters;
        }
        std::vector<HeadParams> heads;
        for (const auto& h : header.at("heads")) {
            HeadParams p;
            p.features = h.at("features");
            p.classes = h.at("classes");
            p.frozen = h.at("frozen");
            p.weights = take(p.features * p.classes);
            p.bias = take(p.classes);
            heads.push_back(std::move(p));
        }
        if (next != count)
            throw IngestionError("checkpoint payload has trailing values");
        const auto& imp = header.at("importance");
        ImportanceState importance;
        importance.nu = imp.at("nu");
        importance.epsilon = imp.at("epsilon");
        importance.current = imp.at("current").get<PerFilter<double>>();
        importance.accumulated = imp.at("accumulated").get<PerFilter<double>>();
        return Checkpoint{header.at("completed_tasks"), header.at("run_seed"),
                          MultiHeadNetwork(arch, header.at("init_seed"), std::move(layers), std::move(heads)),
                          std::move(importance)};
    } catch (const nlohmann::json::exception& e) {
        throw IngestionError(std::string("checkpoint header: ") + e.what());
    }
}

} // namespace gescl
