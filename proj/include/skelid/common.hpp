#pragma once

#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace skelid {

// ----------------------------- error taxonomy -----------------------------
// Exit-code mapping used by the CLI: validation/schema/shape/parse -> 1,
// numeric-check failures -> 2, filesystem problems -> 3.

struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : ValidationError {
    using ValidationError::ValidationError;
};

struct ParseError : ValidationError {
    using ValidationError::ValidationError;
};

struct SchemaError : ValidationError {
    using ValidationError::ValidationError;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ----------------------------- hashing -----------------------------

// 64-bit FNV-1a, used for file checksums in run manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

// SplitMix64 finalizer; the mixing core of the seeding scheme.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Order-sensitive combination of seed components into one key.
inline std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
    return mix64(h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
}

inline std::uint64_t derive_key(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = 0x5ee1d0a7c0ffee11ULL;
    for (auto p : parts) h = hash_combine(h, p);
    return h;
}

// ----------------------------- number formatting -----------------------------

// Shortest decimal form that parses back to the same bits. All text formats
// in the project go through this so rewrites are byte-identical.
inline std::string format_double(double x) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, bool& ok) {
    double out = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    ok = (res.ec == std::errc()) && res.ptr == s.data() + s.size();
    return out;
}

// ----------------------------- little-endian IO -----------------------------

inline void put_u16le(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64le(std::string& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64le(out, bits);
}

class ByteReader {
  public:
    ByteReader(const std::string& data, std::string what) : data_(data), what_(std::move(what)) {}

    std::uint16_t u16() { return static_cast<std::uint16_t>(raw(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(raw(4)); }
    std::uint64_t u64() { return raw(8); }
    double f64() {
        std::uint64_t bits = raw(8);
        double d;
        std::memcpy(&d, &bits, 8);
        return d;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == data_.size(); }
    std::size_t pos() const { return pos_; }

  private:
    std::uint64_t raw(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }
    void need(std::size_t n) {
        if (pos_ + n > data_.size())
            throw ValidationError(what_ + ": truncated (needed " + std::to_string(n) + " bytes at offset " +
                                  std::to_string(pos_) + ")");
    }
    const std::string& data_;
    std::string what_;
    std::size_t pos_ = 0;
};

// ----------------------------- file helpers -----------------------------

inline std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failed: " + path.string());
    return ss.str();
}

// Write via a temp file in the same directory, then rename into place.
inline void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open file for writing: " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed: " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

}  // namespace skelid
