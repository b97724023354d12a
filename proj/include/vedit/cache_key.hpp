#pragma once

#include <compare>
#include <cstdint>
#include <string>

namespace vedit {

/// Which of the two evaluations inside one solver step produced a Value tensor.
enum class Substep : std::uint8_t { full = 0, mid = 1 };

inline const char* to_string(Substep s) { return s == Substep::full ? "full" : "mid"; }

/// Address of one captured Value tensor: (inference step, substep, block).
/// step_index counts inversion steps 1..N from low to high noise.
struct CacheKey {
    int step_index = 0;
    Substep substep = Substep::full;
    int block_index = 0;

    auto operator<=>(const CacheKey&) const = default;
};

inline std::string to_string(const CacheKey& k) {
    return "(step " + std::to_string(k.step_index) + ", " + to_string(k.substep) + ", block " +
           std::to_string(k.block_index) + ")";
}

}  // namespace vedit
