#include "resdepth/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "resdepth/error.hpp"

namespace resdepth {

namespace {

constexpr char kMagic[4] = {'R', 'D', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

static_assert(sizeof(double) == 8, "checkpoint format requires IEEE-754 doubles");

template <typename T>
void write_le(std::ostream& out, T v) {
    // Little-endian hosts only (x86/arm64); documented in the format notes.
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

} // namespace

template <typename T>
Checkpoint Checkpoint::capture(UNet<T>& net, const NormStats& stats) {
    Checkpoint ckpt;
    ckpt.config = net.config();
    ckpt.stats = stats;
    for (const auto& p : net.parameters()) {
        std::vector<double> v(p.value->begin(), p.value->end());
        ckpt.params.emplace_back(p.name, std::move(v));
    }
    for (const auto& b : net.buffers()) {
        std::vector<double> v(b.value->begin(), b.value->end());
        ckpt.buffers.emplace_back(b.name, std::move(v));
    }
    return ckpt;
}

template <typename T>
void Checkpoint::restore(UNet<T>& net) const {
    auto params = net.parameters();
    if (params.size() != this->params.size())
        throw ConfigError("checkpoint parameter count does not match the network");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& [name, data] = this->params[i];
        if (params[i].name != name || params[i].value->size() != data.size())
            throw ConfigError("checkpoint tensor '" + name + "' does not match network tensor '" +
                              params[i].name + "'");
        for (std::size_t k = 0; k < data.size(); ++k)
            (*params[i].value)[k] = static_cast<T>(data[k]);
    }
    auto buffers = net.buffers();
    if (buffers.size() != this->buffers.size())
        throw ConfigError("checkpoint buffer count does not match the network");
    for (std::size_t i = 0; i < buffers.size(); ++i) {
        const auto& [name, data] = this->buffers[i];
        if (buffers[i].name != name || buffers[i].value->size() != data.size())
            throw ConfigError("checkpoint buffer '" + name + "' does not match the network");
        for (std::size_t k = 0; k < data.size(); ++k)
            (*buffers[i].value)[k] = static_cast<T>(data[k]);
    }
}

template Checkpoint Checkpoint::capture<float>(UNet<float>&, const NormStats&);
template Checkpoint Checkpoint::capture<double>(UNet<double>&, const NormStats&);
template void Checkpoint::restore<float>(UNet<float>&) const;
template void Checkpoint::restore<double>(UNet<double>&) const;

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    nlohmann::json dir = nlohmann::json::array();
    auto add = [&](const char* kind, const auto& list) {
        for (const auto& [name, data] : list)
            dir.push_back({{"name", name}, {"kind", kind}, {"size", data.size()}});
    };
    add("param", ckpt.params);
    add("buffer", ckpt.buffers);
    add("opt", ckpt.optimizer);

    nlohmann::json header{{"config", nlohmann::json::parse(ckpt.config.to_json())},
                          {"norm_stats", nlohmann::json::parse(ckpt.stats.to_json())},
                          {"tensors", dir}};
    const std::string htext = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(kMagic, 4);
    write_le<std::uint32_t>(out, kVersion);
    write_le<std::uint64_t>(out, htext.size());
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    auto dump = [&](const auto& list) {
        for (const auto& [name, data] : list)
            out.write(reinterpret_cast<const char*>(data.data()),
                      static_cast<std::streamsize>(data.size() * sizeof(double)));
    };
    dump(ckpt.params);
    dump(ckpt.buffers);
    dump(ckpt.optimizer);
    if (!out) throw IoError("failed while writing '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw ParseError("'" + path + "' is not a checkpoint file (bad magic)");
    const auto version = read_le<std::uint32_t>(in);
    if (version != kVersion)
        throw ParseError("unsupported checkpoint version " + std::to_string(version));
    const auto hlen = read_le<std::uint64_t>(in);
    std::string htext(hlen, '\0');
    in.read(htext.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw ParseError("truncated checkpoint header in '" + path + "'");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(htext);
    } catch (const std::exception& e) {
        throw ParseError("checkpoint header: " + std::string(e.what()));
    }
    Checkpoint ckpt;
    ckpt.config = UNetConfig::from_json(header.at("config").dump());
    ckpt.stats = NormStats::from_json(header.at("norm_stats").dump());
    for (const auto& t : header.at("tensors")) {
        const std::string name = t.at("name").get<std::string>();
        const std::string kind = t.at("kind").get<std::string>();
        const std::size_t size = t.at("size").get<std::size_t>();
        std::vector<double> data(size);
        in.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(size * sizeof(double)));
        if (!in) throw ParseError("truncated checkpoint payload in '" + path + "'");
        if (kind == "param")
            ckpt.params.emplace_back(name, std::move(data));
        else if (kind == "buffer")
            ckpt.buffers.emplace_back(name, std::move(data));
        else
            ckpt.optimizer.emplace_back(name, std::move(data));
    }
    return ckpt;
}

} // namespace resdepth
