#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vedit {

/// Little-endian byte writer used by the LAT1 and VCH1 formats.
class ByteWriter {
public:
    void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
    void magic(std::string_view m) { buf_.insert(buf_.end(), m.begin(), m.end()); }
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f32(float v);

    const std::vector<std::uint8_t>& buffer() const { return buf_; }
    /// Appends CRC32 of everything written so far.
    void finish_with_crc();

private:
    std::vector<std::uint8_t> buf_;
};

/// Bounds-checked little-endian reader; every overrun is a format error.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data, std::string context)
        : data_(data), context_(std::move(context)) {}

    void expect_magic(std::string_view m);
    std::uint8_t u8();
    std::uint32_t u32();
    std::uint64_t u64();
    float f32();

    std::size_t remaining() const { return data_.size() - pos_; }

private:
    void need(std::size_t n);

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
    std::string context_;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Verifies and strips the trailing CRC32; returns the covered prefix.
std::span<const std::uint8_t> verify_crc(std::span<const std::uint8_t> file, const std::string& context);

}  // namespace vedit
