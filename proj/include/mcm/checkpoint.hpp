#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "mcm/adam.hpp"
#include "mcm/embedding.hpp"
#include "mcm/model.hpp"
#include "mcm/tensor.hpp"

namespace mcm {

// Self-describing binary container, little-endian, float32 tensor payloads.
// Layout: magic "MCMCKPT\n", u32 version, config echo (string map), the
// vocabulary token list, named parameter tensors, named buffers, optional
// Adam moments, epoch, selection metric.
namespace ckpt {

inline constexpr char kMagic[8] = {'M', 'C', 'M', 'C', 'K', 'P', 'T', '\n'};
inline constexpr std::uint32_t kVersion = 1;

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}
inline std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}
inline void write_u64(std::ostream& os, std::uint64_t v) {
    write_u32(os, static_cast<std::uint32_t>(v));
    write_u32(os, static_cast<std::uint32_t>(v >> 32));
}
inline std::uint64_t read_u64(std::istream& is) {
    const std::uint64_t lo = read_u32(is);
    const std::uint64_t hi = read_u32(is);
    return lo | (hi << 32);
}
inline void write_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(os, bits);
}
inline double read_f64(std::istream& is) {
    const std::uint64_t bits = read_u64(is);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}
inline void write_str(std::ostream& os, const std::string& s) {
    write_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string read_str(std::istream& is) {
    const std::uint64_t n = read_u64(is);
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}
inline void write_floats(std::ostream& os, const std::vector<float>& v) {
    write_u64(os, v.size());
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(float)));
}
inline std::vector<float> read_floats(std::istream& is) {
    const std::uint64_t n = read_u64(is);
    std::vector<float> v(n);
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(n * sizeof(float)));
    return v;
}

}  // namespace ckpt

struct Checkpoint {
    std::map<std::string, std::string> config;  // run config echo
    std::vector<std::string> vocab_tokens;
    std::vector<std::pair<std::string, std::pair<Shape, std::vector<float>>>> tensors;
    std::vector<std::pair<std::string, std::vector<float>>> buffers;
    bool has_optimizer = false;
    std::vector<std::pair<std::vector<float>, std::vector<float>>> moments;  // m, v
    long optimizer_step = 0;
    std::uint32_t epoch = 0;
    double metric = 0.0;
};

inline Checkpoint snapshot(SequenceModel& model, const Vocabulary& vocab,
                           const std::map<std::string, std::string>& config,
                           Adam* optimizer, std::uint32_t epoch, double metric) {
    Checkpoint c;
    c.config = config;
    c.vocab_tokens = vocab.tokens();
    for (const auto& [name, t] : model.named_parameters())
        c.tensors.emplace_back(name, std::make_pair(t.shape(), t.data()));
    for (const auto& [name, buf] : model.named_buffers())
        c.buffers.emplace_back(name, *buf);
    if (optimizer) {
        c.has_optimizer = true;
        c.optimizer_step = optimizer->step_count();
        for (auto& s : optimizer->slots()) c.moments.emplace_back(s.m, s.v);
    }
    c.epoch = epoch;
    c.metric = metric;
    return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw error("checkpoint: cannot open " + path + " for writing");
    os.write(ckpt::kMagic, 8);
    ckpt::write_u32(os, ckpt::kVersion);
    ckpt::write_u64(os, c.config.size());
    for (const auto& [k, v] : c.config) {
        ckpt::write_str(os, k);
        ckpt::write_str(os, v);
    }
    ckpt::write_u64(os, c.vocab_tokens.size());
    for (const auto& t : c.vocab_tokens) ckpt::write_str(os, t);
    ckpt::write_u64(os, c.tensors.size());
    for (const auto& [name, sv] : c.tensors) {
        ckpt::write_str(os, name);
        ckpt::write_u64(os, sv.first.size());
        for (auto d : sv.first) ckpt::write_u64(os, d);
        ckpt::write_floats(os, sv.second);
    }
    ckpt::write_u64(os, c.buffers.size());
    for (const auto& [name, buf] : c.buffers) {
        ckpt::write_str(os, name);
        ckpt::write_floats(os, buf);
    }
    ckpt::write_u32(os, c.has_optimizer ? 1 : 0);
    if (c.has_optimizer) {
        ckpt::write_u64(os, static_cast<std::uint64_t>(c.optimizer_step));
        ckpt::write_u64(os, c.moments.size());
        for (const auto& [m, v] : c.moments) {
            ckpt::write_floats(os, m);
            ckpt::write_floats(os, v);
        }
    }
    ckpt::write_u32(os, c.epoch);
    ckpt::write_f64(os, c.metric);
    if (!os) throw error("checkpoint: write failure on " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw error("checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, ckpt::kMagic, 8) != 0)
        throw error("checkpoint: " + path + " is not a checkpoint file");
    const std::uint32_t version = ckpt::read_u32(is);
    if (version != ckpt::kVersion)
        throw error("checkpoint: unsupported version " + std::to_string(version));
    Checkpoint c;
    const std::uint64_t nconf = ckpt::read_u64(is);
    for (std::uint64_t i = 0; i < nconf; ++i) {
        auto k = ckpt::read_str(is);
        c.config[k] = ckpt::read_str(is);
    }
    const std::uint64_t nvocab = ckpt::read_u64(is);
    c.vocab_tokens.reserve(nvocab);
    for (std::uint64_t i = 0; i < nvocab; ++i) c.vocab_tokens.push_back(ckpt::read_str(is));
    const std::uint64_t ntens = ckpt::read_u64(is);
    for (std::uint64_t i = 0; i < ntens; ++i) {
        auto name = ckpt::read_str(is);
        const std::uint64_t ndim = ckpt::read_u64(is);
        Shape shape(ndim);
        for (auto& d : shape) d = ckpt::read_u64(is);
        auto data = ckpt::read_floats(is);
        c.tensors.emplace_back(std::move(name),
                               std::make_pair(std::move(shape), std::move(data)));
    }
    const std::uint64_t nbuf = ckpt::read_u64(is);
    for (std::uint64_t i = 0; i < nbuf; ++i) {
        auto name = ckpt::read_str(is);
        c.buffers.emplace_back(std::move(name), ckpt::read_floats(is));
    }
    c.has_optimizer = ckpt::read_u32(is) != 0;
    if (c.has_optimizer) {
        c.optimizer_step = static_cast<long>(ckpt::read_u64(is));
        const std::uint64_t nm = ckpt::read_u64(is);
        for (std::uint64_t i = 0; i < nm; ++i) {
            auto m = ckpt::read_floats(is);
            auto v = ckpt::read_floats(is);
            c.moments.emplace_back(std::move(m), std::move(v));
        }
    }
    c.epoch = ckpt::read_u32(is);
    c.metric = ckpt::read_f64(is);
    if (!is) throw error("checkpoint: truncated file " + path);
    return c;
}

// Copies checkpoint tensors into a freshly built model; shapes must match.
inline void restore_into(SequenceModel& model, const Checkpoint& c,
                         Adam* optimizer = nullptr) {
    auto params = model.named_parameters();
    if (params.size() != c.tensors.size())
        throw error("checkpoint: parameter count mismatch: model has " +
                    std::to_string(params.size()) + ", file has " +
                    std::to_string(c.tensors.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& [name, t] = params[i];
        const auto& [fname, sv] = c.tensors[i];
        if (name != fname)
            throw error("checkpoint: parameter \"" + fname + "\" where \"" + name +
                        "\" expected");
        if (t.shape() != sv.first)
            throw error("checkpoint: shape mismatch on \"" + name + "\": model " +
                        shape_str(t.shape()) + " vs file " + shape_str(sv.first));
        t.data() = sv.second;
    }
    auto bufs = model.named_buffers();
    if (bufs.size() != c.buffers.size())
        throw error("checkpoint: buffer count mismatch");
    for (std::size_t i = 0; i < bufs.size(); ++i) {
        if (bufs[i].first != c.buffers[i].first)
            throw error("checkpoint: buffer \"" + c.buffers[i].first + "\" where \"" +
                        bufs[i].first + "\" expected");
        *bufs[i].second = c.buffers[i].second;
    }
    if (optimizer && c.has_optimizer) {
        auto& slots = optimizer->slots();
        if (slots.size() != c.moments.size())
            throw error("checkpoint: optimizer slot count mismatch");
        for (std::size_t i = 0; i < slots.size(); ++i) {
            slots[i].m = c.moments[i].first;
            slots[i].v = c.moments[i].second;
        }
        optimizer->set_step_count(c.optimizer_step);
    }
}

inline Vocabulary vocab_from_checkpoint(const Checkpoint& c) {
    Vocabulary v;
    for (std::size_t i = 2; i < c.vocab_tokens.size(); ++i) v.add(c.vocab_tokens[i]);
    return v;
}

}  // namespace mcm
