#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctb/tensor.hpp"

namespace ctb {

/// CTB1 array container: magic bytes "CTB1", little-endian u32 rank, u32
/// dims, then raw little-endian float64 payload, row-major. One array per
/// file; datasets index their arrays in a JSON sidecar.
namespace ctb1 {

inline constexpr char kMagic[4] = {'C', 'T', 'B', '1'};
inline constexpr std::size_t kMaxRank = 8;
inline constexpr std::uint64_t kMaxElements = 1ull << 30;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(const unsigned char* p) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

inline double get_f64(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace detail

inline std::string encode(const Tensor& t) {
    std::string out;
    out.reserve(4 + 4 + 4 * t.rank() + 8 * t.numel());
    out.append(kMagic, 4);
    detail::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.data) detail::put_f64(out, v);
    return out;
}

inline Tensor decode(const std::string& bytes, const std::string& context) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::size_t n = bytes.size();
    if (n < 8 || std::memcmp(p, kMagic, 4) != 0)
        throw std::runtime_error("ctb1: bad magic in " + context);
    std::uint32_t rank = detail::get_u32(p + 4);
    if (rank == 0 || rank > kMaxRank)
        throw std::runtime_error("ctb1: dimension overflow in " + context);
    if (n < 8 + 4ull * rank)
        throw std::runtime_error("ctb1: truncated header in " + context);
    std::vector<std::size_t> shape(rank);
    std::uint64_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        std::uint32_t d = detail::get_u32(p + 8 + 4 * i);
        if (d == 0 || numel > kMaxElements / std::max<std::uint64_t>(d, 1))
            throw std::runtime_error("ctb1: dimension overflow in " + context);
        numel *= d;
        shape[i] = d;
    }
    const std::size_t offset = 8 + 4ull * rank;
    if (n != offset + 8 * numel)
        throw std::runtime_error("ctb1: truncated data in " + context);
    std::vector<double> data(numel);
    for (std::uint64_t i = 0; i < numel; ++i)
        data[i] = detail::get_f64(p + offset + 8 * i);
    return Tensor(std::move(shape), std::move(data));
}

inline void write_file(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("ctb1: cannot open for write: " + path.string());
    std::string bytes = encode(t);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("ctb1: write failed: " + path.string());
}

inline Tensor read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("ctb1: cannot open: " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode(bytes, path.string());
}

}  // namespace ctb1

/// 8-bit binary PGM (P5), values mapped linearly from [0,1] to [0,255].
inline void write_pgm(const std::filesystem::path& path, const Image& img) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("pgm: cannot open for write: " + path.string());
    f << "P5\n" << img.shape[1] << " " << img.shape[0] << "\n255\n";
    for (double v : img.data) {
        double c = std::clamp(v, 0.0, 1.0) * 255.0;
        f.put(static_cast<char>(static_cast<unsigned char>(std::lround(c))));
    }
    if (!f) throw std::runtime_error("pgm: write failed: " + path.string());
}

}  // namespace ctb
