#include "vedit/vcache.hpp"

#include "vedit/binary_io.hpp"
#include "vedit/errors.hpp"

namespace vedit {
namespace {

constexpr std::string_view kMagic = "VCH1";
constexpr std::uint32_t kVersion = 1;

void validate_key(const CacheKey& key) {
    require(key.step_index >= 1, ErrorKind::invalid_argument, "cache key step_index must be >= 1");
    require(key.block_index >= 0, ErrorKind::invalid_argument, "cache key block_index must be >= 0");
    require(key.substep == Substep::full || key.substep == Substep::mid, ErrorKind::invalid_argument,
            "cache key substep must be full or mid");
}

}  // namespace

void ValueCache::store(const CacheKey& key, TensorF value) {
    validate_key(key);
    require(value.rank() == 3, ErrorKind::shape_mismatch, "cached values must be (heads, tokens, head_dim)");
    const auto [it, inserted] = records_.try_emplace(key, std::move(value));
    if (!inserted) fail(ErrorKind::duplicate_key, "duplicate cache key " + to_string(key));
}

const TensorF* ValueCache::fetch(const CacheKey& key) const {
    validate_key(key);
    const auto it = records_.find(key);
    return it == records_.end() ? nullptr : &it->second;
}

bool ValueCache::identical(const ValueCache& other) const {
    if (!(meta_ == other.meta_) || records_.size() != other.records_.size()) return false;
    for (auto a = records_.begin(), b = other.records_.begin(); a != records_.end(); ++a, ++b) {
        if (a->first != b->first || !a->second.identical(b->second)) return false;
    }
    return true;
}

std::vector<std::uint8_t> encode_cache(const ValueCache& cache) {
    const auto& m = cache.metadata();
    ByteWriter w;
    w.magic(kMagic);
    w.u32(kVersion);
    w.u32(m.num_steps);
    w.u32(m.capture_steps);
    w.u32(m.capture_blocks);
    w.u32(m.num_blocks);
    w.u64(m.schedule_hash);
    w.u64(m.prompt_hash);
    w.u32(static_cast<std::uint32_t>(cache.size()));
    for (const auto& [key, value] : cache.records()) {
        w.u32(static_cast<std::uint32_t>(key.step_index));
        w.u8(static_cast<std::uint8_t>(key.substep));
        w.u32(static_cast<std::uint32_t>(key.block_index));
        for (std::size_t a = 0; a < 3; ++a) w.u32(static_cast<std::uint32_t>(value.dim(a)));
        for (float v : value.values()) w.f32(v);
    }
    w.finish_with_crc();
    return w.buffer();
}

ValueCache decode_cache(std::span<const std::uint8_t> bytes, const std::string& context) {
    ByteReader r(verify_crc(bytes, context), context);
    r.expect_magic(kMagic);
    const std::uint32_t version = r.u32();
    if (version != kVersion) fail(ErrorKind::format, context + ": unsupported version " + std::to_string(version));

    CacheMetadata m;
    m.num_steps = r.u32();
    m.capture_steps = r.u32();
    m.capture_blocks = r.u32();
    m.num_blocks = r.u32();
    m.schedule_hash = r.u64();
    m.prompt_hash = r.u64();
    const std::uint32_t count = r.u32();

    ValueCache cache(m);
    for (std::uint32_t i = 0; i < count; ++i) {
        CacheKey key;
        key.step_index = static_cast<int>(r.u32());
        const std::uint8_t sub = r.u8();
        if (sub > 1) fail(ErrorKind::format, context + ": bad substep tag " + std::to_string(sub));
        key.substep = static_cast<Substep>(sub);
        key.block_index = static_cast<int>(r.u32());
        Shape shape{r.u32(), r.u32(), r.u32()};
        const std::size_t n = shape[0] * shape[1] * shape[2];
        if (n * 4 > r.remaining()) fail(ErrorKind::format, context + ": record payload truncated");
        TensorF value(shape);
        for (std::size_t j = 0; j < n; ++j) value[j] = r.f32();
        try {
            cache.store(key, std::move(value));
        } catch (const Error& e) {
            fail(ErrorKind::format, context + ": " + e.what());
        }
    }
    if (r.remaining() != 0) fail(ErrorKind::format, context + ": trailing bytes after last record");
    return cache;
}

void save_cache(const ValueCache& cache, const std::filesystem::path& path) { write_file(path, encode_cache(cache)); }

ValueCache load_cache(const std::filesystem::path& path) { return decode_cache(read_file(path), path.string()); }

std::vector<std::string> check_compatibility(const CacheMetadata& found, const CacheMetadata& expected) {
    std::vector<std::string> issues;
    auto cmp = [&](const char* name, auto a, auto b) {
        if (a != b) issues.push_back(std::string(name) + ": cache has " + std::to_string(a) + ", run expects " +
                                     std::to_string(b));
    };
    cmp("steps", found.num_steps, expected.num_steps);
    auto covers = [&](const char* name, std::uint32_t have, std::uint32_t need) {
        if (have < need) issues.push_back(std::string(name) + ": cache covers " + std::to_string(have) +
                                          ", run needs " + std::to_string(need));
    };
    covers("capture_steps", found.capture_steps, expected.capture_steps);
    covers("capture_blocks", found.capture_blocks, expected.capture_blocks);
    cmp("num_blocks", found.num_blocks, expected.num_blocks);
    cmp("schedule_hash", found.schedule_hash, expected.schedule_hash);
    cmp("prompt_hash", found.prompt_hash, expected.prompt_hash);
    return issues;
}

}  // namespace vedit
