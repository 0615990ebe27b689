#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "toyvlm/config.hpp"
#include "toyvlm/errors.hpp"
#include "toyvlm/tensor.hpp"

namespace toyvlm {

// Versioned binary checkpoint:
//
//   magic "TVLM" | u32 version | stage tag | config echo |
//   u32 n_params | per param: name, u32 ndims, i32 dims[], f32 payload (LE)
//
// Strings are u32 length + bytes. Parameters are written in name order, so
// save -> load round-trips bit-exactly. Payload is always float32; a
// double-precision model is cast on save and load.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
    std::string stage_tag;
    ModelConfig config;
    std::vector<std::string> param_names;
};

namespace ckpt_detail {

inline void write_u32(std::ofstream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::ifstream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f) throw IoError("checkpoint: truncated file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_str(std::ofstream& f, const std::string& s) {
    write_u32(f, static_cast<std::uint32_t>(s.size()));
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_str(std::ifstream& f) {
    const std::uint32_t n = read_u32(f);
    std::string s(n, '\0');
    f.read(s.data(), n);
    if (!f) throw IoError("checkpoint: truncated string");
    return s;
}

inline void write_f32(std::ofstream& f, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(f, bits);
}

inline float read_f32(std::ifstream& f) {
    const std::uint32_t bits = read_u32(f);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace ckpt_detail

template <class T>
void save_checkpoint(const std::string& path, const std::map<std::string, TensorT<T>>& params,
                     const ModelConfig& cfg, const std::string& stage_tag) {
    using namespace ckpt_detail;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("save_checkpoint: cannot open " + path);
    f.write("TVLM", 4);
    write_u32(f, kCheckpointVersion);
    write_str(f, stage_tag);
    write_str(f, cfg.to_text());
    write_u32(f, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, p] : params) {
        write_str(f, name);
        write_u32(f, static_cast<std::uint32_t>(p.shape().size()));
        for (int d : p.shape()) write_u32(f, static_cast<std::uint32_t>(d));
        for (T v : p.data()) write_f32(f, static_cast<float>(v));
    }
    if (!f) throw IoError("save_checkpoint: write failed for " + path);
}

struct LoadedCheckpoint {
    CheckpointMeta meta;
    std::map<std::string, std::pair<std::vector<int>, std::vector<float>>> tensors;
};

inline LoadedCheckpoint read_checkpoint(const std::string& path) {
    using namespace ckpt_detail;
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("read_checkpoint: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "TVLM", 4) != 0) throw IoError("read_checkpoint: bad magic in " + path);
    const std::uint32_t version = read_u32(f);
    if (version != kCheckpointVersion)
        throw IoError("read_checkpoint: unsupported version " + std::to_string(version));
    LoadedCheckpoint out;
    out.meta.stage_tag = read_str(f);
    out.meta.config = ModelConfig::from_text(read_str(f));
    const std::uint32_t n = read_u32(f);
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::string name = read_str(f);
        const std::uint32_t ndims = read_u32(f);
        std::vector<int> shape(ndims);
        std::size_t count = 1;
        for (auto& d : shape) {
            d = static_cast<int>(read_u32(f));
            count *= static_cast<std::size_t>(d);
        }
        std::vector<float> data(count);
        for (auto& v : data) v = read_f32(f);
        out.meta.param_names.push_back(name);
        out.tensors.emplace(name, std::make_pair(std::move(shape), std::move(data)));
    }
    return out;
}

struct LoadReport {
    std::vector<std::string> loaded;
    std::vector<std::string> skipped_in_model;       // model params absent from checkpoint
    std::vector<std::string> skipped_in_checkpoint;  // checkpoint params absent from model
    std::vector<std::string> shape_mismatch;         // present in both but incompatible
};

// Copies name-matching tensors into `params`. Strict mode errors on any
// name or shape mismatch, naming the offenders; lenient mode skips and
// reports them.
template <class T>
LoadReport load_into_params(const LoadedCheckpoint& ckpt, std::map<std::string, TensorT<T>>& params, bool strict) {
    LoadReport report;
    for (const auto& [name, entry] : ckpt.tensors)
        if (!params.count(name)) report.skipped_in_checkpoint.push_back(name);
    for (auto& [name, p] : params) {
        auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end()) {
            report.skipped_in_model.push_back(name);
            continue;
        }
        const auto& [shape, data] = it->second;
        if (shape != p.shape()) {
            report.shape_mismatch.push_back(name + " " + shape_str(shape) + " vs " + shape_str(p.shape()));
            continue;
        }
        for (std::size_t i = 0; i < data.size(); ++i) p.data()[i] = static_cast<T>(data[i]);
        report.loaded.push_back(name);
    }
    if (strict && (!report.skipped_in_model.empty() || !report.skipped_in_checkpoint.empty() ||
                   !report.shape_mismatch.empty())) {
        std::string msg = "strict checkpoint load failed;";
        for (const auto& n : report.skipped_in_model) msg += " missing-from-checkpoint:" + n;
        for (const auto& n : report.skipped_in_checkpoint) msg += " missing-from-model:" + n;
        for (const auto& n : report.shape_mismatch) msg += " shape-mismatch:" + n;
        throw ConfigError(msg);
    }
    return report;
}

}  // namespace toyvlm
