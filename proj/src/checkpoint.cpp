#include "mmreid/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mmreid::train {

namespace {

constexpr char kMagic[4] = {'M', 'M', 'R', 'C'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_string(std::string& out, const std::string& s) {
    put_u64(out, s.size());
    out += s;
}

void put_doubles(std::string& out, const std::vector<double>& v) {
    put_u64(out, v.size());
    for (double d : v) put_u64(out, std::bit_cast<std::uint64_t>(d));
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw std::runtime_error("checkpoint: truncated file");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    std::string str() {
        const std::uint64_t n = u64();
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
    std::vector<double> doubles() {
        const std::uint64_t n = u64();
        std::vector<double> v(n);
        for (auto& d : v) d = std::bit_cast<double>(u64());
        return v;
    }
};

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

void save_checkpoint(const CheckpointData& ckpt, const std::string& path) {
    std::string payload;
    put_u32(payload, ckpt.version);
    put_string(payload, ckpt.config_text);
    put_u32(payload, ckpt.epoch);
    put_u64(payload, ckpt.global_step);
    put_u64(payload, ckpt.adam_t);

    put_u64(payload, ckpt.groups.size());
    for (const auto& [group, params] : ckpt.groups) {
        put_string(payload, group);
        put_u64(payload, params.size());
        for (const auto& [name, arr] : params) {
            put_string(payload, name);
            put_u32(payload, arr.rows);
            put_u32(payload, arr.cols);
            put_doubles(payload, arr.data);
        }
    }
    put_u64(payload, ckpt.adam_m.size());
    for (const auto& [key, m] : ckpt.adam_m) {
        put_string(payload, key);
        put_doubles(payload, m);
        const auto it = ckpt.adam_v.find(key);
        if (it == ckpt.adam_v.end()) throw std::logic_error("checkpoint: adam_v missing for " + key);
        put_doubles(payload, it->second);
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    out.write(kMagic, 4);
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    std::string digest;
    put_u64(digest, fnv1a(payload));
    out.write(digest.data(), 8);
}

CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw std::runtime_error("checkpoint: bad magic in " + path);
    }
    const std::string payload = bytes.substr(4, bytes.size() - 12);
    const std::string digest_bytes = bytes.substr(bytes.size() - 8);
    Reader digest_reader{digest_bytes};
    if (digest_reader.u64() != fnv1a(payload)) {
        throw std::runtime_error("checkpoint: digest mismatch, file is corrupt: " + path);
    }

    Reader r{payload};
    CheckpointData ckpt;
    ckpt.version = r.u32();
    if (ckpt.version != 1) {
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(ckpt.version));
    }
    ckpt.config_text = r.str();
    ckpt.epoch = r.u32();
    ckpt.global_step = r.u64();
    ckpt.adam_t = r.u64();

    const std::uint64_t n_groups = r.u64();
    for (std::uint64_t g = 0; g < n_groups; ++g) {
        const std::string group = r.str();
        const std::uint64_t n_params = r.u64();
        for (std::uint64_t p = 0; p < n_params; ++p) {
            const std::string name = r.str();
            CheckpointData::Array arr;
            arr.rows = r.u32();
            arr.cols = r.u32();
            arr.data = r.doubles();
            if (arr.data.size() != static_cast<std::size_t>(arr.rows) * arr.cols) {
                throw std::runtime_error("checkpoint: shape mismatch for " + group + "/" + name);
            }
            ckpt.groups[group][name] = std::move(arr);
        }
    }
    const std::uint64_t n_adam = r.u64();
    for (std::uint64_t i = 0; i < n_adam; ++i) {
        const std::string key = r.str();
        ckpt.adam_m[key] = r.doubles();
        ckpt.adam_v[key] = r.doubles();
    }
    return ckpt;
}

}  // namespace mmreid::train
