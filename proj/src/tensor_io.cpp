#include "vedit/tensor_io.hpp"

#include <bit>
#include <cmath>
#include <fstream>

#include <zlib.h>

#include "vedit/binary_io.hpp"
#include "vedit/errors.hpp"

namespace vedit {

void ByteWriter::u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::finish_with_crc() { u32(crc32_of(buf_)); }

void ByteReader::need(std::size_t n) {
    if (remaining() < n) fail(ErrorKind::format, context_ + ": unexpected end of data");
}

void ByteReader::expect_magic(std::string_view m) {
    need(m.size());
    for (char c : m)
        if (data_[pos_++] != static_cast<std::uint8_t>(c)) fail(ErrorKind::format, context_ + ": bad magic bytes");
}

std::uint8_t ByteReader::u8() {
    need(1);
    return data_[pos_++];
}

std::uint32_t ByteReader::u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
    return v;
}

std::uint64_t ByteReader::u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
    return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks.
    std::size_t off = 0;
    while (off < bytes.size()) {
        const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
        crc = crc32(crc, bytes.data() + off, n);
        off += n;
    }
    return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string() + " for reading");
    std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) fail(ErrorKind::io, "error reading " + path.string());
    return data;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::io, "error writing " + path.string());
}

std::span<const std::uint8_t> verify_crc(std::span<const std::uint8_t> file, const std::string& context) {
    if (file.size() < 4) fail(ErrorKind::format, context + ": file too short");
    const auto body = file.first(file.size() - 4);
    ByteReader trailer(file.last(4), context);
    if (trailer.u32() != crc32_of(body)) fail(ErrorKind::format, context + ": checksum mismatch");
    return body;
}

namespace {
constexpr std::string_view kTensorMagic = "LAT1";
constexpr std::uint32_t kTensorVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
    require(t.rank() >= 1 && t.rank() <= 8, ErrorKind::shape_mismatch,
            "tensor files hold rank 1..8, got " + std::to_string(t.rank()));
    for (double v : t.values())
        require(std::isfinite(static_cast<float>(v)), ErrorKind::numerical, "tensor value not representable as float32");
    ByteWriter w;
    w.magic(kTensorMagic);
    w.u32(kTensorVersion);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : t.values()) w.f32(static_cast<float>(v));
    w.finish_with_crc();
    return w.buffer();
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes, const std::string& context) {
    ByteReader r(verify_crc(bytes, context), context);
    r.expect_magic(kTensorMagic);
    const std::uint32_t version = r.u32();
    if (version != kTensorVersion) fail(ErrorKind::format, context + ": unsupported version " + std::to_string(version));
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) fail(ErrorKind::format, context + ": implausible rank " + std::to_string(rank));
    Shape shape;
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        shape.push_back(r.u32());
        count *= shape.back();
        if (count > r.remaining()) fail(ErrorKind::format, context + ": payload size does not match header");
    }
    if (count * 4 != r.remaining()) fail(ErrorKind::format, context + ": payload size does not match header");
    Tensor t(shape);
    for (std::size_t i = 0; i < count; ++i) t[i] = static_cast<double>(r.f32());
    return t;
}

void save_tensor(const Tensor& t, const std::filesystem::path& path) { write_file(path, encode_tensor(t)); }

Tensor load_tensor(const std::filesystem::path& path) { return decode_tensor(read_file(path), path.string()); }

}  // namespace vedit
