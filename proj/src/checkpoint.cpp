/*
 * Copyright 2026 AdvBCT Toolkit Contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "advbct/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "advbct/errors.hpp"

namespace advbct {

namespace {

constexpr char kMagic[4] = {'A', 'B', 'C', 'T'};

void write_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char buf[4];
    buf[0] = static_cast<unsigned char>(v & 0xff);
    buf[1] = static_cast<unsigned char>((v >> 8) & 0xff);
    buf[2] = static_cast<unsigned char>((v >> 16) & 0xff);
    buf[3] = static_cast<unsigned char>((v >> 24) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t read_u32(std::ifstream& in) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    if (!in.good()) throw IoError("checkpoint: truncated u32");
    return static_cast<std::uint32_t>(buf[0]) | (static_cast<std::uint32_t>(buf[1]) << 8) |
           (static_cast<std::uint32_t>(buf[2]) << 16) |
           (static_cast<std::uint32_t>(buf[3]) << 24);
}

void write_f64(std::ofstream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 8);
}

double read_f64(std::ifstream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    if (!in.good()) throw IoError("checkpoint: truncated value");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

}  // namespace

void save_tensors(const std::string& path, const std::vector<NamedTensor>& tensors) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(kMagic, 4);
    write_u32(out, kCheckpointVersion);
    for (const NamedTensor& t : tensors) {
        write_u32(out, static_cast<std::uint32_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        write_u32(out, static_cast<std::uint32_t>(t.mat.rows));
        write_u32(out, static_cast<std::uint32_t>(t.mat.cols));
        for (double v : t.mat.values) write_f64(out, v);
    }
    if (!out.good()) throw IoError("write failed: " + path);
}

std::vector<NamedTensor> load_tensors(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in.good() || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError("bad magic in " + path);
    }
    const std::uint32_t version = read_u32(in);
    if (version != kCheckpointVersion) {
        throw IoError("unsupported format version " + std::to_string(version) + " in " + path);
    }
    std::vector<NamedTensor> tensors;
    while (true) {
        in.peek();
        if (in.eof()) break;
        const std::uint32_t name_len = read_u32(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in.good()) throw IoError("checkpoint: truncated name in " + path);
        const std::uint32_t rows = read_u32(in);
        const std::uint32_t cols = read_u32(in);
        DenseMatrix m(rows, cols);
        for (double& v : m.values) v = read_f64(in);
        tensors.push_back({std::move(name), std::move(m)});
    }
    return tensors;
}

namespace {

DenseMatrix row_vector(const std::vector<double>& v) {
    DenseMatrix m(1, v.size());
    m.values = v;
    return m;
}

const NamedTensor* find(const std::vector<NamedTensor>& ts, const std::string& name) {
    for (const NamedTensor& t : ts)
        if (t.name == name) return &t;
    return nullptr;
}

const NamedTensor& require(const std::vector<NamedTensor>& ts, const std::string& name,
                           const std::string& path) {
    const NamedTensor* t = find(ts, name);
    if (!t) throw IoError("checkpoint missing tensor '" + name + "' in " + path);
    return *t;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelCheckpoint& ckpt) {
    std::vector<NamedTensor> tensors;
    for (std::size_t l = 0; l < ckpt.embed.layers.size(); ++l) {
        const std::string prefix = "embed." + std::to_string(l);
        tensors.push_back({prefix + ".w", ckpt.embed.layers[l].w});
        tensors.push_back({prefix + ".b", row_vector(ckpt.embed.layers[l].b)});
    }
    tensors.push_back({"classifier.w", ckpt.classifier.lin.w});
    tensors.push_back({"classifier.b", row_vector(ckpt.classifier.lin.b)});
    if (ckpt.has_discriminator) {
        tensors.push_back({"discriminator.0.w", ckpt.discriminator.l1.w});
        tensors.push_back({"discriminator.0.b", row_vector(ckpt.discriminator.l1.b)});
        tensors.push_back({"discriminator.1.w", ckpt.discriminator.l2.w});
        tensors.push_back({"discriminator.1.b", row_vector(ckpt.discriminator.l2.b)});
    }
    save_tensors(path, tensors);
}

ModelCheckpoint load_checkpoint(const std::string& path) {
    const std::vector<NamedTensor> tensors = load_tensors(path);
    ModelCheckpoint ckpt;
    for (std::size_t l = 0;; ++l) {
        const std::string prefix = "embed." + std::to_string(l);
        const NamedTensor* w = find(tensors, prefix + ".w");
        if (!w) break;
        Dense layer(w->mat.rows, w->mat.cols);
        layer.w = w->mat;
        layer.b = require(tensors, prefix + ".b", path).mat.values;
        if (layer.b.size() != layer.out_dim()) {
            throw IoError("checkpoint: bias shape mismatch in " + path);
        }
        ckpt.embed.layers.push_back(std::move(layer));
    }
    if (ckpt.embed.layers.empty()) {
        throw IoError("checkpoint has no embedding layers: " + path);
    }
    const NamedTensor& cw = require(tensors, "classifier.w", path);
    ckpt.classifier.lin.w = cw.mat;
    ckpt.classifier.lin.b = require(tensors, "classifier.b", path).mat.values;
    if (const NamedTensor* dw = find(tensors, "discriminator.0.w")) {
        ckpt.has_discriminator = true;
        ckpt.discriminator.l1.w = dw->mat;
        ckpt.discriminator.l1.b = require(tensors, "discriminator.0.b", path).mat.values;
        ckpt.discriminator.l2.w = require(tensors, "discriminator.1.w", path).mat;
        ckpt.discriminator.l2.b = require(tensors, "discriminator.1.b", path).mat.values;
    }
    return ckpt;
}

}  // namespace advbct
