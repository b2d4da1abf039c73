#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpie/models.hpp"
#include "fpie/tensor.hpp"

namespace fpie {

/// Weight-file format (all integers little-endian):
///   magic "FPIE" | u16 version=1 | u32 count |
///   per tensor: u16 name_len | name bytes (UTF-8) | 4 x u32 dims | f32 data.
inline constexpr char kWeightMagic[4] = {'F', 'P', 'I', 'E'};
inline constexpr uint16_t kWeightVersion = 1;

struct WeightFileError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u16(std::ostream& os, uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                                static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

inline void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint16_t get_u16(std::istream& is) {
    unsigned char b[2];
    if (!is.read(reinterpret_cast<char*>(b), 2)) throw WeightFileError("weight file: truncated header field");
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

inline uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw WeightFileError("weight file: truncated header field");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

} // namespace detail

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

inline void save_weights(const std::string& path, const std::vector<NamedTensor>& entries) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw WeightFileError("weight file: cannot open for writing: " + path);
    os.write(kWeightMagic, 4);
    detail::put_u16(os, kWeightVersion);
    detail::put_u32(os, static_cast<uint32_t>(entries.size()));
    for (const NamedTensor& e : entries) {
        if (e.name.size() > 0xffff) throw WeightFileError("weight file: name too long: " + e.name);
        detail::put_u16(os, static_cast<uint16_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        const Shape s = e.tensor.shape();
        for (int64_t d : {s.n, s.c, s.h, s.w}) detail::put_u32(os, static_cast<uint32_t>(d));
        static_assert(std::endian::native == std::endian::little, "raw f32 payload assumes little-endian host");
        os.write(reinterpret_cast<const char*>(e.tensor.data()),
                 static_cast<std::streamsize>(e.tensor.size() * sizeof(float)));
    }
    if (!os) throw WeightFileError("weight file: write failed: " + path);
}

inline std::vector<NamedTensor> load_weights(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw WeightFileError("weight file: cannot open: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kWeightMagic, 4) != 0) {
        throw WeightFileError("weight file: bad magic in " + path);
    }
    const uint16_t version = detail::get_u16(is);
    if (version != kWeightVersion) {
        throw WeightFileError("weight file: unsupported version " + std::to_string(version));
    }
    const uint32_t count = detail::get_u32(is);
    std::vector<NamedTensor> out;
    out.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const uint16_t name_len = detail::get_u16(is);
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw WeightFileError("weight file: truncated name");
        Shape s;
        s.n = detail::get_u32(is);
        s.c = detail::get_u32(is);
        s.h = detail::get_u32(is);
        s.w = detail::get_u32(is);
        Tensor t(s);
        if (!is.read(reinterpret_cast<char*>(t.data()),
                     static_cast<std::streamsize>(t.size() * sizeof(float)))) {
            throw WeightFileError("weight file: truncated payload for '" + name + "' (bad length)");
        }
        out.push_back({std::move(name), std::move(t)});
    }
    return out;
}

inline std::vector<NamedTensor> model_tensors(const Model& m) {
    std::vector<NamedTensor> out;
    for (const Parameter& p : m.params) out.push_back({p.name, p.value});
    return out;
}

inline void save_model(const std::string& path, const Model& m) { save_weights(path, model_tensors(m)); }

inline void save_models(const std::string& path, const std::vector<const Model*>& models) {
    std::vector<NamedTensor> all;
    for (const Model* m : models)
        for (const Parameter& p : m->params) all.push_back({p.name, p.value});
    save_weights(path, all);
}

/// Copies file entries into the model's parameters by name. Every model
/// parameter must be present with a matching shape; extra entries (e.g. the
/// discriminator half of a checkpoint) are ignored.
inline void load_into_model(const std::string& path, Model& m) {
    const std::vector<NamedTensor> entries = load_weights(path);
    std::map<std::string, const Tensor*> by_name;
    for (const NamedTensor& e : entries) by_name[e.name] = &e.tensor;
    for (Parameter& p : m.params) {
        auto it = by_name.find(p.name);
        if (it == by_name.end()) {
            throw WeightFileError("weight file: missing tensor '" + p.name + "' in " + path);
        }
        if (!(it->second->shape() == p.value.shape())) {
            throw WeightFileError("weight file: shape mismatch for '" + p.name + "': file has " +
                                  it->second->shape().str() + ", model expects " + p.value.shape().str());
        }
        std::copy(it->second->data(), it->second->data() + it->second->size(), p.value.data());
    }
}

/// Reconstructs the generator architecture from the tensor names and shapes
/// in a weight file, so `enhance`/`eval` need no side-band config.
inline GeneratorConfig infer_generator_config(const std::vector<NamedTensor>& entries) {
    std::map<std::string, Shape> shapes;
    for (const NamedTensor& e : entries) shapes[e.name] = e.tensor.shape();
    auto need = [&](const std::string& n) {
        auto it = shapes.find(n);
        if (it == shapes.end()) throw WeightFileError("weight file: cannot infer generator config, missing '" + n + "'");
        return it->second;
    };
    GeneratorConfig cfg;
    const Shape head = need("gen/head/weight"); // (c0, 3, k, k)
    cfg.kernel = head.h;
    cfg.base_channels = head.n;
    cfg.use_prelu = shapes.count("gen/head/act/prelu") > 0;
    int64_t blocks = 0;
    while (shapes.count("gen/block" + std::to_string(blocks) + "/conv1/weight")) ++blocks;
    cfg.blocks = blocks > 0 ? blocks : 1;
    if (shapes.count("gen/down1/weight")) {
        cfg.variant = GeneratorVariant::Strided;
        cfg.strided_kernel = need("gen/down1/weight").h;
        cfg.max_channels = 4 * cfg.base_channels;
    } else {
        cfg.variant = GeneratorVariant::Baseline;
        cfg.strided_kernel = cfg.kernel;
        cfg.max_channels = cfg.base_channels;
    }
    cfg.block_batch_norm = shapes.count("gen/block0/bn1/gamma") > 0;
    return cfg;
}

} // namespace fpie
