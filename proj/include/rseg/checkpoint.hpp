// Copyright 2026 The rseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Named tensor container and its ".ckpt1" serialization:
//
//   "CKPT1"  u32 count
//   count × { u16 name_len, name[name_len], u8 rank, rank × u32 dim, f32 data[] }
//   UTF-8 JSON metadata until end of file
//
// All integers and floats are little-endian. Tensors are written in name
// order, so identical containers always serialize to identical bytes.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rseg/error.hpp"
#include "rseg/tensor.hpp"

namespace rseg {

struct Checkpoint {
    std::map<std::string, Tensor> tensors;
    nlohmann::json meta = nlohmann::json::object();

    bool contains(const std::string &name) const { return tensors.count(name) != 0; }

    const Tensor &get(const std::string &name) const {
        auto it = tensors.find(name);
        if (it == tensors.end()) {
            throw ConfigError("checkpoint is missing tensor '" + name + "'");
        }
        return it->second;
    }
};

namespace io {

inline constexpr std::string_view kCheckpointMagic = "CKPT1";

class ByteWriter {
public:
    void bytes(const void *p, std::size_t n) {
        const auto *b = static_cast<const std::uint8_t *>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) {
        for (int i = 0; i < 2; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void str(std::string_view s) { bytes(s.data(), s.size()); }

    const std::vector<std::uint8_t> &buffer() const { return buf_; }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> data, std::string what)
        : data_(data), what_(std::move(what)) {}

    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) {
            throw FormatError(what_ + ": truncated at byte " + std::to_string(pos_));
        }
    }
    std::uint8_t u8() {
        need(1);
        return data_[pos_++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(data_[pos_] | (data_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char *>(data_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return data_.size() - pos_; }
    const std::string &what() const { return what_; }

private:
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
    std::string what_;
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open '" + path.string() + "' for reading");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path &path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError("cannot open '" + path.string() + "' for writing");
    }
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw FormatError("write to '" + path.string() + "' failed");
    }
}

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint &ckpt) {
    ByteWriter w;
    w.str(kCheckpointMagic);
    w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto &[name, t] : ckpt.tensors) {
        if (name.size() > 0xFFFF) {
            throw FormatError("tensor name too long: " + name.substr(0, 32) + "...");
        }
        w.u16(static_cast<std::uint16_t>(name.size()));
        w.str(name);
        w.u8(static_cast<std::uint8_t>(t.rank()));
        for (std::size_t d : t.shape()) {
            w.u32(static_cast<std::uint32_t>(d));
        }
        for (float v : t.data()) {
            w.f32(v);
        }
    }
    w.str(ckpt.meta.is_null() ? std::string("{}") : ckpt.meta.dump());
    return w.take();
}

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string &what = "checkpoint") {
    ByteReader r(bytes, what);
    if (r.str(kCheckpointMagic.size()) != kCheckpointMagic) {
        throw FormatError(what + ": bad magic, expected CKPT1");
    }
    Checkpoint ckpt;
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.str(r.u16());
        const std::uint8_t rank = r.u8();
        if (rank == 0) {
            throw FormatError(what + ": tensor '" + name + "' has rank 0");
        }
        Shape shape(rank);
        for (auto &d : shape) {
            d = r.u32();
            if (d == 0) {
                throw FormatError(what + ": tensor '" + name + "' has a zero dimension");
            }
        }
        const std::size_t n = shape_numel(shape);
        r.need(n * 4);
        std::vector<float> data(n);
        for (auto &v : data) {
            v = r.f32();
        }
        if (!ckpt.tensors.emplace(name, Tensor(std::move(shape), std::move(data))).second) {
            throw FormatError(what + ": duplicate tensor '" + name + "'");
        }
    }
    const std::string meta = r.str(r.remaining());
    if (!meta.empty()) {
        try {
            ckpt.meta = nlohmann::json::parse(meta);
        } catch (const nlohmann::json::exception &e) {
            throw FormatError(what + ": metadata is not valid JSON (" + e.what() + ")");
        }
    }
    return ckpt;
}

inline Checkpoint load_checkpoint(const std::filesystem::path &path) {
    return decode_checkpoint(read_file(path), path.string());
}

inline void save_checkpoint(const Checkpoint &ckpt, const std::filesystem::path &path) {
    write_file(path, encode_checkpoint(ckpt));
}

} // namespace io
} // namespace rseg
