#include "orthoseg/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>

namespace orthoseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'O', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

// The parameter set a config implies, independent of values.
void check_against_config(const Checkpoint& ckpt) {
    const Parameters<float> expected = build<float>(ckpt.config, 0);
    if (expected.size() != ckpt.params.size())
        throw Error("checkpoint parameters do not match the recorded architecture");
    auto it = ckpt.params.begin();
    for (const auto& [name, t] : expected) {
        if (it->first != name || !it->second.same_shape(t))
            throw Error("checkpoint parameters do not match the recorded architecture");
        ++it;
    }
    if (static_cast<int>(ckpt.bands.size()) != ckpt.config.in_channels)
        throw Error("checkpoint bands disagree with in_channels");
}

template <class T>
void write_raw(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_raw(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw Error("checkpoint file is truncated");
    return v;
}

}  // namespace

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
    check_against_config(ckpt);

    json header;
    header["config"] = ckpt.config.to_json();
    json bands = json::array();
    for (BandId b : ckpt.bands) bands.push_back(to_string(b));
    header["bands"] = bands;
    json arrays = json::array();
    for (const auto& [name, t] : ckpt.params)
        arrays.push_back({{"name", name}, {"shape", {t.n, t.c, t.h, t.w}}});
    header["arrays"] = arrays;
    const std::string head = header.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write checkpoint " + path.string());
    os.write(kMagic, sizeof(kMagic));
    write_raw(os, kVersion);
    write_raw(os, static_cast<std::uint64_t>(head.size()));
    os.write(head.data(), static_cast<std::streamsize>(head.size()));
    for (const auto& [name, t] : ckpt.params)
        os.write(reinterpret_cast<const char*>(t.v.data()),
                 static_cast<std::streamsize>(sizeof(float) * t.size()));
    if (!os) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open checkpoint " + path.string());

    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw Error(path.string() + " is not a checkpoint file");
    const auto version = read_raw<std::uint32_t>(is);
    if (version != kVersion)
        throw Error("unsupported checkpoint version " + std::to_string(version));

    const auto head_len = read_raw<std::uint64_t>(is);
    if (head_len > (1u << 24)) throw Error("checkpoint header length is implausible");
    std::string head(head_len, '\0');
    is.read(head.data(), static_cast<std::streamsize>(head_len));
    if (!is) throw Error("checkpoint file is truncated");

    json header;
    try {
        header = json::parse(head);
    } catch (const json::exception& e) {
        throw Error("checkpoint header is not valid JSON: " + std::string(e.what()));
    }

    Checkpoint ckpt;
    ckpt.config = NetworkConfig::from_json(header.at("config"));
    for (const auto& b : header.at("bands"))
        ckpt.bands.push_back(band_from_string(b.get<std::string>()));
    for (const auto& a : header.at("arrays")) {
        const auto shape = a.at("shape");
        Tensor<float> t(shape.at(0).get<int>(), shape.at(1).get<int>(),
                        shape.at(2).get<int>(), shape.at(3).get<int>());
        is.read(reinterpret_cast<char*>(t.v.data()),
                static_cast<std::streamsize>(sizeof(float) * t.size()));
        if (!is) throw Error("checkpoint file is truncated");
        ckpt.params.emplace(a.at("name").get<std::string>(), std::move(t));
    }
    check_against_config(ckpt);
    return ckpt;
}

}  // namespace orthoseg
