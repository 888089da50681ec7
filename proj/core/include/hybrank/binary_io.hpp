#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

namespace hybrank::io {

using Magic = std::array<char, 8>;

// All multi-byte values are little-endian on disk regardless of host order.

void write_u8(std::ostream& out, std::uint8_t v);
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f32(std::ostream& out, float v);
void write_f64(std::ostream& out, double v);
void write_string(std::ostream& out, std::string_view s);  // u32 length + bytes
void write_magic(std::ostream& out, const Magic& magic);

std::uint8_t read_u8(std::istream& in);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
float read_f32(std::istream& in);
double read_f64(std::istream& in);
std::string read_string(std::istream& in);
/// Throws ParseError naming `what` if the next 8 bytes differ from `magic`.
void expect_magic(std::istream& in, const Magic& magic, const std::string& what);

constexpr Magic make_magic(const char (&s)[8]) {
    // "HYBIDX1" plus the implicit terminator gives the 8-byte "HYBIDX1\0" tag.
    Magic m{};
    for (std::size_t i = 0; i < 8; ++i) m[i] = s[i];
    return m;
}

/// Writes a file by streaming into `<path>.tmp.<pid>` and renaming over `path`.
/// The writer callback receives a binary ofstream.
template <typename Fn>
void write_atomically(const std::filesystem::path& path, Fn&& writer);

void commit_atomic(const std::filesystem::path& tmp, const std::filesystem::path& dst);
std::filesystem::path temp_path_for(const std::filesystem::path& dst);

/// FNV-1a 64-bit over a byte string; used for cache keys.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);
/// Whole-file read into a string.
std::string read_file(const std::filesystem::path& path);

}  // namespace hybrank::io

#include <fstream>

#include "hybrank/error.hpp"

namespace hybrank::io {

template <typename Fn>
void write_atomically(const std::filesystem::path& path, Fn&& writer) {
    const auto tmp = temp_path_for(path);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open '" + tmp.string() + "' for writing");
        writer(out);
        out.flush();
        if (!out) {
            out.close();
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw Error("write failed for '" + path.string() + "'");
        }
    }
    commit_atomic(tmp, path);
}

}  // namespace hybrank::io
