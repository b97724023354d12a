#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vedit/cache_key.hpp"
#include "vedit/tensor.hpp"

namespace vedit {

/// What a cache was captured under. Editing checks these against its own run.
struct CacheMetadata {
    std::uint32_t num_steps = 0;       // N
    std::uint32_t capture_steps = 0;   // n
    std::uint32_t capture_blocks = 0;  // m
    std::uint32_t num_blocks = 0;      // L
    std::uint64_t schedule_hash = 0;
    std::uint64_t prompt_hash = 0;

    bool operator==(const CacheMetadata&) const = default;
};

/// Captured attention Value tensors keyed by (step, substep, block). Each
/// record is (heads, video tokens, head_dim) in float32.
class ValueCache {
public:
    ValueCache() = default;
    explicit ValueCache(CacheMetadata meta) : meta_(meta) {}

    const CacheMetadata& metadata() const { return meta_; }
    void set_metadata(const CacheMetadata& meta) { meta_ = meta; }

    /// Inserts a record; storing an existing key is a duplicate-key error.
    void store(const CacheKey& key, TensorF value);

    /// Exact-match lookup. Returns nullptr when absent; throws on a malformed key.
    const TensorF* fetch(const CacheKey& key) const;

    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    const std::map<CacheKey, TensorF>& records() const { return records_; }

    /// Bitwise equality of metadata and every record.
    bool identical(const ValueCache& other) const;

private:
    CacheMetadata meta_;
    std::map<CacheKey, TensorF> records_;
};

std::vector<std::uint8_t> encode_cache(const ValueCache& cache);
ValueCache decode_cache(std::span<const std::uint8_t> bytes, const std::string& context = "cache");

void save_cache(const ValueCache& cache, const std::filesystem::path& path);
ValueCache load_cache(const std::filesystem::path& path);

/// Human-readable list of problems; empty when compatible. Steps, blocks and
/// hashes must match exactly; the capture counts in `expected` are minimum
/// coverage requirements.
std::vector<std::string> check_compatibility(const CacheMetadata& found, const CacheMetadata& expected);

}  // namespace vedit
