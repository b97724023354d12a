#include "vedit/attention.hpp"

#include <cmath>

#include <Eigen/Dense>

namespace vedit {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;

void validate(const AttentionTensors& t, const AttentionDirective& d) {
    require(t.q.rank() == 3, ErrorKind::shape_mismatch, "attention tensors must be (heads, sequence, head_dim)");
    require_same_shape(t.k.shape(), t.q.shape(), "attention K");
    require_same_shape(t.v.shape(), t.q.shape(), "attention V");
    const std::size_t seq = t.q.dim(1);
    require(t.video_tokens.begin <= t.video_tokens.end && t.video_tokens.end <= seq, ErrorKind::shape_mismatch,
            "video token range exceeds sequence length");
    if (d.mode == AttentionMode::inject) {
        require(d.injected_value != nullptr, ErrorKind::invalid_argument, "inject directive without a value tensor");
        require_same_shape(d.injected_value->shape(), Shape{t.q.dim(0), t.video_tokens.size(), t.q.dim(2)},
                           "injected value");
    }
}

// Row-wise softmax in place; each row is shifted by its maximum first.
void softmax_rows(RowMat& s) {
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
        auto row = s.row(r);
        const double mx = row.maxCoeff();
        double sum = 0.0;
        for (Eigen::Index c = 0; c < row.size(); ++c) {
            row(c) = std::exp(row(c) - mx);
            sum += row(c);
        }
        row /= sum;
    }
}

RowMat head_weights(const Tensor& q, const Tensor& k, std::size_t h) {
    const auto seq = static_cast<Eigen::Index>(q.dim(1));
    const auto hd = static_cast<Eigen::Index>(q.dim(2));
    const std::size_t stride = q.dim(1) * q.dim(2);
    ConstMap qh(q.data() + h * stride, seq, hd);
    ConstMap kh(k.data() + h * stride, seq, hd);
    RowMat s = (qh * kh.transpose()) * (1.0 / std::sqrt(static_cast<double>(hd)));
    softmax_rows(s);
    return s;
}

}  // namespace

AttentionResult joint_attention(const AttentionTensors& t, const AttentionDirective& d) {
    validate(t, d);
    const std::size_t heads = t.q.dim(0), seq = t.q.dim(1), hd = t.q.dim(2);
    const std::size_t stride = seq * hd;
    const TokenRange video = t.video_tokens;

    AttentionResult result;
    if (d.mode == AttentionMode::capture) {
        TensorF cap(Shape{heads, video.size(), hd});
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t r = 0; r < video.size(); ++r)
                for (std::size_t c = 0; c < hd; ++c) cap.at(h, r, c) = static_cast<float>(t.v.at(h, video.begin + r, c));
        result.captured = std::move(cap);
    }

    result.output = Tensor(t.q.shape());
    RowMat v_eff(static_cast<Eigen::Index>(seq), static_cast<Eigen::Index>(hd));
    for (std::size_t h = 0; h < heads; ++h) {
        v_eff = ConstMap(t.v.data() + h * stride, static_cast<Eigen::Index>(seq), static_cast<Eigen::Index>(hd));
        if (d.mode == AttentionMode::inject) {
            for (std::size_t r = 0; r < video.size(); ++r)
                for (std::size_t c = 0; c < hd; ++c)
                    v_eff(static_cast<Eigen::Index>(video.begin + r), static_cast<Eigen::Index>(c)) =
                        static_cast<double>(d.injected_value->at(h, r, c));
        }
        const RowMat a = head_weights(t.q, t.k, h);
        Eigen::Map<RowMat> out(result.output.data() + h * stride, static_cast<Eigen::Index>(seq),
                               static_cast<Eigen::Index>(hd));
        out.noalias() = a * v_eff;
    }
    return result;
}

Tensor attention_weights(const Tensor& q, const Tensor& k) {
    require(q.rank() == 3, ErrorKind::shape_mismatch, "attention tensors must be (heads, sequence, head_dim)");
    require_same_shape(k.shape(), q.shape(), "attention K");
    const std::size_t heads = q.dim(0), seq = q.dim(1);
    Tensor w(Shape{heads, seq, seq});
    for (std::size_t h = 0; h < heads; ++h) {
        const RowMat a = head_weights(q, k, h);
        std::copy(a.data(), a.data() + a.size(), w.data() + h * seq * seq);
    }
    return w;
}

}  // namespace vedit
