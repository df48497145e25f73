#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "emoseg/tensor.hpp"

// On-disk formats: EMOT binary tensors, and binary PGM/PPM images.
// All multi-byte EMOT fields are little-endian.
namespace emoseg::io {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <typename S>
constexpr uint8_t emot_dtype_code();
template <>
constexpr uint8_t emot_dtype_code<float>() { return 0; }
template <>
constexpr uint8_t emot_dtype_code<double>() { return 1; }
template <>
constexpr uint8_t emot_dtype_code<uint8_t>() { return 2; }

namespace detail {

inline void put_le(std::string& out, uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline uint64_t get_le(const unsigned char* p, int bytes) {
    uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return v;
}

inline std::vector<unsigned char> read_all(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(f),
                                      std::istreambuf_iterator<char>());
}

inline void write_all(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("short write to " + path);
}

}  // namespace detail

template <typename S>
std::string emot_bytes(const Tensor<S>& t) {
    std::string out = "EMOT";
    out.push_back(1);  // version
    out.push_back(static_cast<char>(emot_dtype_code<S>()));
    detail::put_le(out, static_cast<uint64_t>(t.rank()), 4);
    for (int d : t.shape) detail::put_le(out, static_cast<uint64_t>(d), 8);
    const size_t payload = t.data.size() * sizeof(S);
    const size_t head = out.size();
    out.resize(head + payload);
    std::memcpy(out.data() + head, t.data.data(), payload);
    return out;
}

template <typename S>
void write_emot(const std::string& path, const Tensor<S>& t) {
    detail::write_all(path, emot_bytes(t));
}

// Parses one EMOT record starting at offset; advances offset past it.
template <typename S>
Tensor<S> parse_emot(const std::vector<unsigned char>& buf, size_t& off,
                     const std::string& what) {
    if (buf.size() < off + 10 || std::memcmp(buf.data() + off, "EMOT", 4) != 0)
        throw IoError(what + ": bad EMOT magic");
    if (buf[off + 4] != 1) throw IoError(what + ": unsupported EMOT version");
    if (buf[off + 5] != emot_dtype_code<S>()) throw IoError(what + ": EMOT dtype mismatch");
    const uint32_t rank = static_cast<uint32_t>(detail::get_le(buf.data() + off + 6, 4));
    size_t p = off + 10;
    std::vector<int> shape;
    for (uint32_t i = 0; i < rank; ++i) {
        if (buf.size() < p + 8) throw IoError(what + ": truncated EMOT dims");
        shape.push_back(static_cast<int>(detail::get_le(buf.data() + p, 8)));
        p += 8;
    }
    Tensor<S> t(shape);
    const size_t payload = t.data.size() * sizeof(S);
    if (buf.size() < p + payload) throw IoError(what + ": truncated EMOT payload");
    std::memcpy(t.data.data(), buf.data() + p, payload);
    off = p + payload;
    return t;
}

template <typename S>
Tensor<S> read_emot(const std::string& path) {
    auto buf = detail::read_all(path);
    size_t off = 0;
    return parse_emot<S>(buf, off, path);
}

// --- binary PGM (P5) / PPM (P6), maxval 255 ---

inline void write_pgm(const std::string& path, int h, int w, const std::vector<uint8_t>& pix) {
    std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    out.append(reinterpret_cast<const char*>(pix.data()), pix.size());
    detail::write_all(path, out);
}

inline size_t parse_pnm_header(const std::vector<unsigned char>& buf, const std::string& magic,
                               const std::string& path, int& h, int& w) {
    size_t p = 0;
    auto token = [&]() -> std::string {
        while (p < buf.size() && (std::isspace(buf[p]) || buf[p] == '#')) {
            if (buf[p] == '#')
                while (p < buf.size() && buf[p] != '\n') ++p;
            else
                ++p;
        }
        std::string t;
        while (p < buf.size() && !std::isspace(buf[p])) t.push_back(static_cast<char>(buf[p++]));
        return t;
    };
    if (token() != magic) throw IoError(path + ": not a " + magic + " file");
    w = std::stoi(token());
    h = std::stoi(token());
    if (token() != "255") throw IoError(path + ": unsupported maxval");
    return p + 1;  // single whitespace after maxval
}

inline std::vector<uint8_t> read_pgm(const std::string& path, int& h, int& w) {
    auto buf = detail::read_all(path);
    size_t p = parse_pnm_header(buf, "P5", path, h, w);
    const size_t n = static_cast<size_t>(h) * w;
    if (buf.size() < p + n) throw IoError(path + ": truncated pixel data");
    return std::vector<uint8_t>(buf.begin() + static_cast<long>(p),
                                buf.begin() + static_cast<long>(p + n));
}

// frame is [3,H,W] in [0,1]; stored interleaved RGB.
inline void write_ppm(const std::string& path, const Tensor<float>& frame) {
    if (frame.rank() != 3 || frame.dim(0) != 3) throw IoError("write_ppm: expects [3,H,W]");
    const int h = frame.dim(1), w = frame.dim(2);
    std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int c = 0; c < 3; ++c) {
                float v = frame.at3(c, i, j);
                v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
                out.push_back(static_cast<char>(static_cast<int>(v * 255.f + 0.5f)));
            }
    detail::write_all(path, out);
}

inline Tensor<float> read_ppm(const std::string& path) {
    auto buf = detail::read_all(path);
    int h = 0, w = 0;
    size_t p = parse_pnm_header(buf, "P6", path, h, w);
    const size_t n = static_cast<size_t>(h) * w * 3;
    if (buf.size() < p + n) throw IoError(path + ": truncated pixel data");
    Tensor<float> frame({3, h, w});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int c = 0; c < 3; ++c)
                frame.at3(c, i, j) = static_cast<float>(buf[p + (static_cast<size_t>(i) * w + j) * 3 +
                                                            static_cast<size_t>(c)]) /
                                     255.f;
    return frame;
}

}  // namespace emoseg::io
