#include "zocert/checkpoint.hpp"

#include <openssl/sha.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace zocert {

namespace {

constexpr char kMagic[8] = {'Z', 'O', 'C', 'E', 'R', 'T', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

template <typename T>
void write_pod(std::ofstream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is, const std::string& path) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
        throw ValidationError("checkpoint: truncated file " + path);
    }
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw ValidationError("checkpoint: cannot open for writing: " + path);
    os.write(kMagic, sizeof(kMagic));
    write_pod(os, kVersion);
    write_pod(os, static_cast<std::uint64_t>(entries.size()));
    for (const auto& e : entries) {
        write_pod(os, static_cast<std::uint32_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        write_pod(os, static_cast<std::uint32_t>(e.tensor.shape.size()));
        for (int d : e.tensor.shape) write_pod(os, static_cast<std::uint64_t>(d));
        os.write(reinterpret_cast<const char*>(e.tensor.data.data()),
                 static_cast<std::streamsize>(e.tensor.data.size() * sizeof(double)));
    }
    if (!os) throw ValidationError("checkpoint: write failed: " + path);
}

std::vector<CheckpointEntry> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("checkpoint: cannot open: " + path);
    char magic[8];
    if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw ValidationError("checkpoint: bad magic in " + path);
    }
    const auto version = read_pod<std::uint32_t>(is, path);
    if (version != kVersion) {
        throw ValidationError("checkpoint: unsupported version " + std::to_string(version) + " in " + path);
    }
    const auto count = read_pod<std::uint64_t>(is, path);
    std::vector<CheckpointEntry> entries;
    entries.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        CheckpointEntry e;
        const auto name_len = read_pod<std::uint32_t>(is, path);
        e.name.resize(name_len);
        if (!is.read(e.name.data(), name_len)) throw ValidationError("checkpoint: truncated file " + path);
        const auto ndim = read_pod<std::uint32_t>(is, path);
        std::vector<int> shape(ndim);
        for (auto& d : shape) d = static_cast<int>(read_pod<std::uint64_t>(is, path));
        e.tensor = Tensor(shape);
        if (!is.read(reinterpret_cast<char*>(e.tensor.data.data()),
                     static_cast<std::streamsize>(e.tensor.numel() * sizeof(double)))) {
            throw ValidationError("checkpoint: truncated tensor data for '" + e.name + "' in " + path);
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

void save_state(const std::string& path, const std::vector<ParamRef>& state) {
    std::vector<CheckpointEntry> entries;
    entries.reserve(state.size());
    for (const auto& p : state) entries.push_back({p.name, *p.tensor});
    save_checkpoint(path, entries);
}

void load_state(const std::string& path, const std::vector<ParamRef>& state) {
    const auto entries = load_checkpoint(path);
    if (entries.size() != state.size()) {
        throw ValidationError("checkpoint: " + path + " has " + std::to_string(entries.size()) +
                              " entries, model expects " + std::to_string(state.size()));
    }
    for (std::size_t i = 0; i < state.size(); ++i) {
        if (entries[i].name != state[i].name) {
            throw ValidationError("checkpoint: entry '" + entries[i].name + "' where '" + state[i].name +
                                  "' was expected in " + path);
        }
        if (entries[i].tensor.shape != state[i].tensor->shape) {
            throw ValidationError("checkpoint: shape " + entries[i].tensor.shape_str() + " for '" +
                                  entries[i].name + "', model has " + state[i].tensor->shape_str());
        }
        state[i].tensor->data = entries[i].tensor.data;
    }
}

std::vector<std::string> checkpoint_names(const std::string& path) {
    std::vector<std::string> names;
    for (const auto& e : load_checkpoint(path)) names.push_back(e.name);
    return names;
}

std::string file_sha256_hex(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("sha256: cannot open: " + path);
    SHA256_CTX ctx;
    SHA256_Init(&ctx);
    char buf[1 << 16];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
        SHA256_Update(&ctx, buf, static_cast<std::size_t>(is.gcount()));
        if (!is) break;
    }
    unsigned char digest[SHA256_DIGEST_LENGTH];
    SHA256_Final(digest, &ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * SHA256_DIGEST_LENGTH);
    for (unsigned char b : digest) {
        out.push_back(hex[b >> 4]);
        out.push_back(hex[b & 0xf]);
    }
    return out;
}

}  // namespace zocert
