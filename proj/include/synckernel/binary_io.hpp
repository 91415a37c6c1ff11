#ifndef SYNCKERNEL_BINARY_IO_HPP
#define SYNCKERNEL_BINARY_IO_HPP

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "synckernel/error.hpp"

namespace synckernel::detail {

// Little-endian encoding independent of host byte order.
class ByteWriter {
public:
    void magic(std::string_view tag) { bytes_.insert(bytes_.end(), tag.begin(), tag.end()); }
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }

    const std::vector<std::uint8_t>& bytes() const { return bytes_; }

    void write_file(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw UnreadableFileError("cannot open for writing: " + path.string());
        out.write(reinterpret_cast<const char*>(bytes_.data()), static_cast<std::streamsize>(bytes_.size()));
        if (!out) throw UnreadableFileError("write failed: " + path.string());
    }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    ByteReader(std::vector<std::uint8_t> bytes, std::string source)
        : bytes_(std::move(bytes)), source_(std::move(source)) {}

    static ByteReader from_file(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw UnreadableFileError("cannot open: " + path.string());
        std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return ByteReader(std::move(bytes), path.string());
    }

    void expect_magic(std::string_view tag) {
        need(tag.size(), "magic");
        if (std::memcmp(bytes_.data() + pos_, tag.data(), tag.size()) != 0)
            throw BadMagicError(source_ + ": bad magic, expected \"" + std::string(tag) + "\"");
        pos_ += tag.size();
    }

    void expect_version(std::uint32_t version) {
        const auto v = u32();
        if (v != version)
            throw VersionMismatchError(source_ + ": unsupported version " + std::to_string(v) + " (expected " +
                                       std::to_string(version) + ")");
    }

    std::uint8_t u8() {
        need(1, "u8");
        return bytes_[pos_++];
    }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4, "u32")); }
    std::uint64_t u64() { return get(8, "u64"); }
    double f64() { return std::bit_cast<double>(get(8, "f64")); }

    std::size_t remaining() const { return bytes_.size() - pos_; }
    const std::string& source() const { return source_; }

    /// Checks that exactly `count` float64 values follow, then nothing else.
    void expect_payload(std::uint64_t count) {
        const std::uint64_t have = remaining();
        if (count > have / 8 || have < count * 8)
            throw TruncatedError(source_ + ": truncated payload, expected " + std::to_string(count) +
                                 " float64 values, found " + std::to_string(have / 8));
        if (have != count * 8)
            throw FormatError(source_ + ": " + std::to_string(have - count * 8) + " trailing bytes after payload");
    }

private:
    void need(std::size_t n, const char* what) {
        if (remaining() < n) throw TruncatedError(source_ + ": truncated while reading " + what);
    }

    std::uint64_t get(int n, const char* what) {
        need(static_cast<std::size_t>(n), what);
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    std::vector<std::uint8_t> bytes_;
    std::string source_;
    std::size_t pos_ = 0;
};

inline std::uint64_t checked_product(std::uint64_t a, std::uint64_t b, const std::string& source) {
    if (a != 0 && b > UINT64_MAX / 8 / a) throw FormatError(source + ": declared dimensions overflow");
    return a * b;
}

}  // namespace synckernel::detail

#endif  // SYNCKERNEL_BINARY_IO_HPP
