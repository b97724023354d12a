#include "vedit/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace vedit {

double temporal_flicker(const Video& video) {
    require(video.rank() == 4, ErrorKind::shape_mismatch, "video must be (frames, channels, height, width)");
    const std::size_t frames = video.dim(0);
    if (frames < 2) return 0.0;
    const std::size_t per = video.size() / frames;
    double total = 0.0;
    for (std::size_t f = 0; f + 1 < frames; ++f) {
        double acc = 0.0;
        for (std::size_t i = 0; i < per; ++i) {
            const double d = video[(f + 1) * per + i] - video[f * per + i];
            acc += d * d;
        }
        total += acc / static_cast<double>(per);
    }
    return total / static_cast<double>(frames - 1);
}

MetricsReport compute_metrics(const Video& a, const Video& b) {
    require(a.rank() == 4, ErrorKind::shape_mismatch, "video must be (frames, channels, height, width)");
    require_same_shape(a.shape(), b.shape(), "compute_metrics");
    MetricsReport r;
    const std::size_t frames = a.dim(0), per = a.size() / frames;
    double total = 0.0;
    for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::size_t i = 0; i < per; ++i) {
            const double d = a[f * per + i] - b[f * per + i];
            acc += d * d;
        }
        total += acc;
        r.per_frame_mse.push_back(acc / static_cast<double>(per));
    }
    r.mse = total / static_cast<double>(a.size());
    r.psnr = r.mse > 0.0 ? 10.0 * std::log10(1.0 / r.mse) : std::numeric_limits<double>::infinity();
    r.flicker_a = temporal_flicker(a);
    r.flicker_b = temporal_flicker(b);
    r.temporal_flicker = r.flicker_a - r.flicker_b;
    return r;
}

std::string MetricsReport::to_text() const {
    std::ostringstream os;
    os << std::setprecision(10);
    os << "mse = " << mse << '\n';
    os << "psnr_db = ";
    if (std::isinf(psnr))
        os << "inf\n";
    else
        os << psnr << '\n';
    os << "flicker_output = " << flicker_a << '\n';
    os << "flicker_reference = " << flicker_b << '\n';
    os << "temporal_flicker = " << temporal_flicker << '\n';
    os << "# frame mse\n";
    for (std::size_t f = 0; f < per_frame_mse.size(); ++f) os << f << ' ' << per_frame_mse[f] << '\n';
    return os.str();
}

}  // namespace vedit
