#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vedit/attention.hpp"
#include "vedit/schedule.hpp"
#include "vedit/tensor.hpp"

namespace vedit {

struct DenoiserConfig {
    int num_blocks = 12;  // L
    int model_dim = 32;
    int heads = 4;
    int patch_size = 4;   // pixel -> latent pooling factor of the toy VAE
    int token_patch = 4;  // latent cells per token side
    int channels = 4;
    // Scale of the transformer branch added on top of the analytic prior term.
    double output_gain = 0.02;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Stand-in for the text encoder output: one unit-norm row per whitespace token.
struct PromptEmbedding {
    Tensor tokens;  // (num_text_tokens, model_dim)
    std::string source_text;

    std::size_t num_tokens() const { return tokens.empty() ? 0 : tokens.dim(0); }
    std::uint64_t hash() const;
};

PromptEmbedding embed_prompt(const std::string& text, const DenoiserConfig& config);
/// Embedding used by the unconditional guidance branch: a single all-zero token.
PromptEmbedding unconditional_embedding(const DenoiserConfig& config);

/// Toy VAE encoder: patch_size x patch_size average pooling per channel and frame.
Latent encode_video(const Video& frames, const DenoiserConfig& config);
/// Toy VAE decoder: nearest-neighbour upsampling, clamped to [0, 1].
Video decode_latent(const Latent& latent, const DenoiserConfig& config);

using CaptureSink = std::function<void(const CacheKey&, TensorF&&)>;

std::vector<AttentionDirective> passthrough_directives(int num_blocks);

/// Anything that predicts noise for a latent at a training timestep.
class NoiseModel {
public:
    virtual ~NoiseModel() = default;

    virtual int num_blocks() const = 0;

    /// Prompt fed to the unconditional guidance branch.
    virtual PromptEmbedding null_prompt() const = 0;

    /// `directives` has one entry per block; captured Value tensors are handed to `sink`.
    virtual Tensor predict_noise(const Latent& z, int t, const PromptEmbedding& prompt,
                                 std::span<const AttentionDirective> directives,
                                 const CaptureSink& sink = {}) const = 0;
};

/// Small joint-attention transformer with fixed seeded weights.
///
/// The latent is cut into token_patch x token_patch cells per frame, each cell
/// projected to model_dim. Text tokens come first, then video tokens in
/// (frame, row, column) order. Every token gets a position code and an
/// embedding of log-SNR(t). Each block is pre-normalised attention followed by
/// a GELU feed-forward of width 4 * model_dim, both residual.
///
/// The returned noise is sqrt(1 - alpha_bar_t) * z + output_gain * f(z, t, prompt):
/// the first term is the exact noise predictor for a standard normal data
/// distribution, which keeps inversion well conditioned; f carries all prompt
/// and attention dependence.
class Denoiser final : public NoiseModel {
public:
    Denoiser(DenoiserConfig config, NoiseSchedule schedule);
    ~Denoiser() override;
    Denoiser(Denoiser&&) noexcept;
    Denoiser& operator=(Denoiser&&) noexcept;

    int num_blocks() const override { return config_.num_blocks; }
    PromptEmbedding null_prompt() const override { return unconditional_embedding(config_); }
    const DenoiserConfig& config() const { return config_; }
    const NoiseSchedule& schedule() const { return schedule_; }

    Tensor predict_noise(const Latent& z, int t, const PromptEmbedding& prompt,
                         std::span<const AttentionDirective> directives,
                         const CaptureSink& sink = {}) const override;

private:
    struct Weights;

    DenoiserConfig config_;
    NoiseSchedule schedule_;
    std::unique_ptr<Weights> weights_;
};

}  // namespace vedit
