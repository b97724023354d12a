#pragma once

#include <cstddef>
#include <optional>

#include "vedit/cache_key.hpp"
#include "vedit/tensor.hpp"

namespace vedit {

/// Half-open interval [begin, end) of sequence positions.
struct TokenRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
};

/// Q, K and V laid out as (heads, sequence, head_dim). The joint sequence holds
/// text tokens and video tokens; video_tokens marks the latter.
struct AttentionTensors {
    Tensor q;
    Tensor k;
    Tensor v;
    TokenRange video_tokens;
};

enum class AttentionMode { passthrough, capture, inject };

/// Per-block instruction for what happens to the Value tensor.
struct AttentionDirective {
    AttentionMode mode = AttentionMode::passthrough;
    CacheKey capture_key{};
    // Non-owning; must outlive the attention call. Shape (heads, video tokens, head_dim).
    const TensorF* injected_value = nullptr;

    static AttentionDirective passthrough() { return {}; }
    static AttentionDirective capture(CacheKey key) { return {AttentionMode::capture, key, nullptr}; }
    static AttentionDirective inject(const TensorF& value) { return {AttentionMode::inject, {}, &value}; }
};

struct AttentionResult {
    Tensor output;                   // (heads, sequence, head_dim)
    std::optional<TensorF> captured;  // video rows of V, set in capture mode only
};

/// softmax(Q K^T / sqrt(head_dim)) V', where V' is V with its video rows
/// replaced by the injected tensor in inject mode. Q and K are never modified.
/// Captured values are emitted at float32 precision.
AttentionResult joint_attention(const AttentionTensors& tensors, const AttentionDirective& directive);

/// Attention probabilities, shape (heads, sequence, sequence).
Tensor attention_weights(const Tensor& q, const Tensor& k);

}  // namespace vedit
