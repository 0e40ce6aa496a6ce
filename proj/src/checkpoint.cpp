#include "sac/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace sac {

namespace {

constexpr char kMagic[8] = {'S', 'A', 'C', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw DataError("checkpoint: truncated file");
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const ParamStore*>>& stores) {
    std::map<std::string, Tensor> blobs;  // sorted by full name
    for (const auto& [prefix, store] : stores) {
        for (const auto& [name, t] : store->params()) blobs[prefix + "/" + name] = t;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("checkpoint: cannot open for writing: " + path);
    f.write(kMagic, sizeof(kMagic));
    write_pod(f, kVersion);
    write_pod(f, static_cast<std::uint64_t>(blobs.size()));
    for (const auto& [name, t] : blobs) {
        write_pod(f, static_cast<std::uint32_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod(f, static_cast<std::uint32_t>(t->shape.size()));
        for (auto d : t->shape) write_pod(f, static_cast<std::uint64_t>(d));
        f.write(reinterpret_cast<const char*>(t->values.data()),
                static_cast<std::streamsize>(t->values.size() * sizeof(double)));
    }
    if (!f) throw DataError("checkpoint: write failed: " + path);
}

void load_checkpoint(const std::string& path, const std::vector<std::pair<std::string, ParamStore*>>& stores) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("checkpoint: cannot open: " + path);
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw DataError("checkpoint: bad magic");
    if (read_pod<std::uint32_t>(f) != kVersion) throw DataError("checkpoint: unsupported version");
    const std::uint64_t count = read_pod<std::uint64_t>(f);

    std::map<std::string, Tensor> wanted;
    for (const auto& [prefix, store] : stores) {
        for (const auto& [name, t] : store->params()) wanted[prefix + "/" + name] = t;
    }
    std::uint64_t filled = 0;
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto name_len = read_pod<std::uint32_t>(f);
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        const auto rank = read_pod<std::uint32_t>(f);
        std::vector<std::int64_t> shape;
        for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(static_cast<std::int64_t>(read_pod<std::uint64_t>(f)));
        const std::int64_t n = shape_product(shape);
        auto it = wanted.find(name);
        if (it == wanted.end()) throw DataError("checkpoint: unknown parameter " + name);
        if (it->second->shape != shape)
            throw DataError("checkpoint: shape mismatch for " + name + ": file " + shape_str(shape) + " vs model " +
                            shape_str(it->second->shape));
        f.read(reinterpret_cast<char*>(it->second->values.data()), static_cast<std::streamsize>(n * sizeof(double)));
        if (!f) throw DataError("checkpoint: truncated values for " + name);
        ++filled;
    }
    if (filled != wanted.size())
        throw DataError("checkpoint: file has " + std::to_string(filled) + " blobs, model needs " +
                        std::to_string(wanted.size()));
}

}  // namespace sac
