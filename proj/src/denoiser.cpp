#include "vedit/denoiser.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>

#include "vedit/random.hpp"

namespace vedit {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr int kTimeFeatures = 8;
constexpr double kNormEps = 1e-6;

RowMat random_matrix(NormalStream& rng, int rows, int cols, double scale) {
    RowMat m(rows, cols);
    const double s = scale / std::sqrt(static_cast<double>(rows));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.next() * s;
    return m;
}

RowMat rms_norm(const RowMat& x) {
    RowMat y(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double ms = x.row(r).squaredNorm() / static_cast<double>(x.cols());
        y.row(r) = x.row(r) / std::sqrt(ms + kNormEps);
    }
    return y;
}

double gelu(double x) {
    constexpr double c = 0.7978845608028654;  // sqrt(2 / pi)
    return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

// (seq, dim) -> (heads, seq, head_dim)
Tensor split_heads(const RowMat& m, int heads) {
    const auto seq = static_cast<std::size_t>(m.rows());
    const auto hd = static_cast<std::size_t>(m.cols() / heads);
    Tensor t(Shape{static_cast<std::size_t>(heads), seq, hd});
    for (std::size_t h = 0; h < static_cast<std::size_t>(heads); ++h)
        for (std::size_t s = 0; s < seq; ++s)
            for (std::size_t c = 0; c < hd; ++c)
                t.at(h, s, c) = m(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(h * hd + c));
    return t;
}

RowMat merge_heads(const Tensor& t) {
    const std::size_t heads = t.dim(0), seq = t.dim(1), hd = t.dim(2);
    RowMat m(static_cast<Eigen::Index>(seq), static_cast<Eigen::Index>(heads * hd));
    for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t s = 0; s < seq; ++s)
            for (std::size_t c = 0; c < hd; ++c)
                m(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(h * hd + c)) = t.at(h, s, c);
    return m;
}

std::uint64_t token_seed(const std::string& token, std::uint64_t seed) {
    return fnv1a64(token) ^ (seed * 0x9E3779B97F4A7C15ULL);
}

}  // namespace

void DenoiserConfig::validate() const {
    require(num_blocks >= 1, ErrorKind::invalid_argument, "num_blocks must be >= 1");
    require(model_dim >= 1 && heads >= 1 && model_dim % heads == 0, ErrorKind::invalid_argument,
            "model_dim must be a positive multiple of heads");
    require(patch_size >= 1, ErrorKind::invalid_argument, "patch_size must be >= 1");
    require(token_patch >= 1, ErrorKind::invalid_argument, "token_patch must be >= 1");
    require(channels >= 1, ErrorKind::invalid_argument, "channels must be >= 1");
    require(std::isfinite(output_gain), ErrorKind::invalid_argument, "output_gain must be finite");
}

std::uint64_t PromptEmbedding::hash() const {
    return fnv1a64(std::as_bytes(tokens.values()), fnv1a64(source_text));
}

PromptEmbedding embed_prompt(const std::string& text, const DenoiserConfig& config) {
    std::vector<std::string> words;
    std::istringstream in(text);
    for (std::string w; in >> w;) words.push_back(std::move(w));
    require(!words.empty(), ErrorKind::invalid_argument, "prompt text is empty");

    const auto dim = static_cast<std::size_t>(config.model_dim);
    PromptEmbedding p{Tensor(Shape{words.size(), dim}), text};
    for (std::size_t i = 0; i < words.size(); ++i) {
        NormalStream rng(token_seed(words[i], config.seed));
        double norm2 = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            const double v = rng.next();
            p.tokens[i * dim + d] = v;
            norm2 += v * v;
        }
        const double inv = 1.0 / std::sqrt(norm2);
        for (std::size_t d = 0; d < dim; ++d) p.tokens[i * dim + d] *= inv;
    }
    return p;
}

PromptEmbedding unconditional_embedding(const DenoiserConfig& config) {
    return {Tensor(Shape{1, static_cast<std::size_t>(config.model_dim)}), ""};
}

Latent encode_video(const Video& frames, const DenoiserConfig& config) {
    require(frames.rank() == 4, ErrorKind::shape_mismatch, "video must be (frames, channels, height, width)");
    const auto p = static_cast<std::size_t>(config.patch_size);
    const std::size_t f = frames.dim(0), c = frames.dim(1), h = frames.dim(2), w = frames.dim(3);
    require(p >= 1 && h % p == 0 && w % p == 0, ErrorKind::shape_mismatch,
            "video height/width must be divisible by patch_size " + std::to_string(p));

    Latent z(Shape{f, c, h / p, w / p});
    const double inv = 1.0 / static_cast<double>(p * p);
    for (std::size_t fi = 0; fi < f; ++fi)
        for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t y = 0; y < h / p; ++y)
                for (std::size_t x = 0; x < w / p; ++x) {
                    double acc = 0.0;
                    for (std::size_t dy = 0; dy < p; ++dy)
                        for (std::size_t dx = 0; dx < p; ++dx) acc += frames.at(fi, ci, y * p + dy, x * p + dx);
                    z.at(fi, ci, y, x) = acc * inv;
                }
    return z;
}

Video decode_latent(const Latent& latent, const DenoiserConfig& config) {
    require(latent.rank() == 4, ErrorKind::shape_mismatch, "latent must be (frames, channels, height, width)");
    const auto p = static_cast<std::size_t>(config.patch_size);
    const std::size_t f = latent.dim(0), c = latent.dim(1), h = latent.dim(2), w = latent.dim(3);
    Video v(Shape{f, c, h * p, w * p});
    for (std::size_t fi = 0; fi < f; ++fi)
        for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t y = 0; y < h * p; ++y)
                for (std::size_t x = 0; x < w * p; ++x)
                    v.at(fi, ci, y, x) = std::clamp(latent.at(fi, ci, y / p, x / p), 0.0, 1.0);
    return v;
}

std::vector<AttentionDirective> passthrough_directives(int num_blocks) {
    return std::vector<AttentionDirective>(static_cast<std::size_t>(std::max(num_blocks, 0)));
}

struct Denoiser::Weights {
    struct Block {
        RowMat wq, wk, wv, wo, w1, w2;
    };

    RowMat w_in;    // (channels * token_patch^2, dim)
    RowMat w_time;  // (2 * kTimeFeatures, dim)
    RowMat w_out;   // (dim, channels * token_patch^2)
    std::vector<Block> blocks;
    std::vector<double> video_phase;  // per dim
    std::vector<double> text_phase;   // per dim
};

Denoiser::Denoiser(DenoiserConfig config, NoiseSchedule schedule)
    : config_(config), schedule_(std::move(schedule)), weights_(std::make_unique<Weights>()) {
    config_.validate();
    const int d = config_.model_dim;
    const int patch_dim = config_.channels * config_.token_patch * config_.token_patch;

    NormalStream rng(config_.seed ^ 0x5DEECE66DULL);
    auto& w = *weights_;
    w.w_in = random_matrix(rng, patch_dim, d, 1.0);
    w.w_time = random_matrix(rng, 2 * kTimeFeatures, d, 1.0);
    w.w_out = random_matrix(rng, d, patch_dim, 1.0);
    w.blocks.resize(static_cast<std::size_t>(config_.num_blocks));
    for (auto& b : w.blocks) {
        b.wq = random_matrix(rng, d, d, 1.0);
        b.wk = random_matrix(rng, d, d, 1.0);
        b.wv = random_matrix(rng, d, d, 1.0);
        b.wo = random_matrix(rng, d, d, 0.5);
        b.w1 = random_matrix(rng, d, 4 * d, 1.0);
        b.w2 = random_matrix(rng, 4 * d, d, 0.5);
    }
    for (int i = 0; i < d; ++i) w.video_phase.push_back(2.0 * std::numbers::pi * rng.uniform());
    for (int i = 0; i < d; ++i) w.text_phase.push_back(2.0 * std::numbers::pi * rng.uniform());
}

Denoiser::~Denoiser() = default;
Denoiser::Denoiser(Denoiser&&) noexcept = default;
Denoiser& Denoiser::operator=(Denoiser&&) noexcept = default;

Tensor Denoiser::predict_noise(const Latent& z, int t, const PromptEmbedding& prompt,
                               std::span<const AttentionDirective> directives, const CaptureSink& sink) const {
    const auto& w = *weights_;
    const int dim = config_.model_dim;
    const auto tp = static_cast<std::size_t>(config_.token_patch);

    require(z.rank() == 4, ErrorKind::shape_mismatch, "latent must be (frames, channels, height, width)");
    require(z.dim(1) == static_cast<std::size_t>(config_.channels), ErrorKind::shape_mismatch,
            "latent channel count does not match the denoiser");
    require(z.dim(2) % tp == 0 && z.dim(3) % tp == 0, ErrorKind::shape_mismatch,
            "latent height/width must be divisible by token_patch");
    require(prompt.tokens.rank() == 2 && prompt.tokens.dim(1) == static_cast<std::size_t>(dim),
            ErrorKind::shape_mismatch, "prompt embedding width does not match model_dim");
    require(directives.size() == static_cast<std::size_t>(config_.num_blocks), ErrorKind::shape_mismatch,
            "expected " + std::to_string(config_.num_blocks) + " attention directives, got " +
                std::to_string(directives.size()));

    const double alpha_bar = schedule_.alpha_bar_at(t);
    const double lam = logsnr(schedule_, t);

    const std::size_t frames = z.dim(0), channels = z.dim(1);
    const std::size_t rows = z.dim(2) / tp, cols = z.dim(3) / tp;
    const std::size_t n_text = prompt.num_tokens();
    const std::size_t n_video = frames * rows * cols;
    const std::size_t seq = n_text + n_video;
    const auto patch_dim = static_cast<Eigen::Index>(channels * tp * tp);

    // Timestep embedding from low-frequency features of log-SNR.
    Eigen::RowVectorXd feat(2 * kTimeFeatures);
    for (int k = 0; k < kTimeFeatures; ++k) {
        const double f = 0.25 * std::ldexp(1.0, -k);
        feat(k) = std::sin(lam * f);
        feat(kTimeFeatures + k) = std::cos(lam * f);
    }
    const Eigen::RowVectorXd temb = feat * w.w_time;

    RowMat patches(static_cast<Eigen::Index>(n_video), patch_dim);
    for (std::size_t f = 0; f < frames; ++f)
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
                const auto tok = static_cast<Eigen::Index>((f * rows + r) * cols + c);
                Eigen::Index j = 0;
                for (std::size_t ch = 0; ch < channels; ++ch)
                    for (std::size_t dy = 0; dy < tp; ++dy)
                        for (std::size_t dx = 0; dx < tp; ++dx) patches(tok, j++) = z.at(f, ch, r * tp + dy, c * tp + dx);
            }

    RowMat h(static_cast<Eigen::Index>(seq), dim);
    const double third = std::ceil(dim / 3.0);
    for (std::size_t i = 0; i < n_text; ++i)
        for (int d = 0; d < dim; ++d) {
            const double freq = std::pow(10000.0, -std::floor(d / 2.0) / (dim / 2.0));
            h(static_cast<Eigen::Index>(i), d) =
                prompt.tokens[i * static_cast<std::size_t>(dim) + static_cast<std::size_t>(d)] +
                0.5 * std::sin(static_cast<double>(i) * freq + w.text_phase[static_cast<std::size_t>(d)]);
        }
    h.bottomRows(static_cast<Eigen::Index>(n_video)) = patches * w.w_in;
    for (std::size_t f = 0; f < frames; ++f)
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
                const auto tok = static_cast<Eigen::Index>(n_text + (f * rows + r) * cols + c);
                const double coord[3] = {static_cast<double>(f), static_cast<double>(r), static_cast<double>(c)};
                for (int d = 0; d < dim; ++d) {
                    const double freq = std::pow(10000.0, -std::floor(d / 3.0) / third);
                    h(tok, d) += 0.5 * std::sin(coord[d % 3] * freq + w.video_phase[static_cast<std::size_t>(d)]);
                }
            }
    h.rowwise() += temb;

    const TokenRange video{n_text, seq};
    for (std::size_t b = 0; b < w.blocks.size(); ++b) {
        const auto& blk = w.blocks[b];
        const RowMat x = rms_norm(h);
        AttentionTensors at;
        at.q = split_heads(x * blk.wq, config_.heads);
        at.k = split_heads(x * blk.wk, config_.heads);
        // Value tensors live at float32 precision so stored and live values are interchangeable.
        RowMat v = x * blk.wv;
        for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = static_cast<double>(static_cast<float>(v.data()[i]));
        at.v = split_heads(v, config_.heads);
        at.video_tokens = video;

        AttentionResult res = joint_attention(at, directives[b]);
        if (res.captured && sink) sink(directives[b].capture_key, std::move(*res.captured));
        h += merge_heads(res.output) * blk.wo;

        RowMat hidden = rms_norm(h) * blk.w1;
        hidden = hidden.unaryExpr(&gelu);
        h += hidden * blk.w2;
    }

    const RowMat out = rms_norm(h.bottomRows(static_cast<Eigen::Index>(n_video))) * w.w_out;

    Tensor eps(z.shape());
    const double prior = std::sqrt(1.0 - alpha_bar);
    for (std::size_t f = 0; f < frames; ++f)
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
                const auto tok = static_cast<Eigen::Index>((f * rows + r) * cols + c);
                Eigen::Index j = 0;
                for (std::size_t ch = 0; ch < channels; ++ch)
                    for (std::size_t dy = 0; dy < tp; ++dy)
                        for (std::size_t dx = 0; dx < tp; ++dx) {
                            const std::size_t y = r * tp + dy, xx = c * tp + dx;
                            eps.at(f, ch, y, xx) = prior * z.at(f, ch, y, xx) + config_.output_gain * out(tok, j++);
                        }
            }
    return eps;
}

}  // namespace vedit
