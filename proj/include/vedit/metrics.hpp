#pragma once

#include <limits>
#include <string>
#include <vector>

#include "vedit/tensor.hpp"

namespace vedit {

struct MetricsReport {
    double mse = 0.0;
    double psnr = std::numeric_limits<double>::infinity();  // +inf when mse == 0
    double flicker_a = 0.0;
    double flicker_b = 0.0;
    double temporal_flicker = 0.0;  // flicker_a - flicker_b
    std::vector<double> per_frame_mse;

    std::string to_text() const;
};

/// Mean over adjacent frame pairs of the mean squared frame difference.
double temporal_flicker(const Video& video);

/// Compares video `a` against reference `b` (peak value 1.0).
MetricsReport compute_metrics(const Video& a, const Video& b);

}  // namespace vedit
