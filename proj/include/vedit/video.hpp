#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "vedit/tensor.hpp"

namespace vedit {

/// A bright ellipse translating linearly over a smooth seeded background.
struct SyntheticVideoSpec {
    int frames = 8;
    int channels = 4;
    int height = 64;
    int width = 64;
    double velocity_x = 1.0;  // pixels per frame
    double velocity_y = 0.0;
    double semi_major = 10.0;
    double semi_minor = 3.0;
    double shape_value = 0.95;
    // Centre in frame 0; drawn from the seed when unset.
    std::optional<double> start_x;
    std::optional<double> start_y;
    std::uint64_t seed = 0;
};

/// Pixel video (frames, channels, height, width) with values in [0, 1].
Video make_synthetic_video(const SyntheticVideoSpec& spec);

/// Binary PPM (P6) of one frame. Channels 0..2 become RGB; fewer channels are
/// replicated as grey.
void write_ppm(const Video& video, std::size_t frame, const std::filesystem::path& path);
/// One frame as a (1, 3, height, width) video.
Video read_ppm(const std::filesystem::path& path);

/// Writes frame_0000.ppm, frame_0001.ppm, ... into `dir` (created if missing).
std::vector<std::filesystem::path> export_frames(const Video& video, const std::filesystem::path& dir);
/// Reads frame_*.ppm from `dir` in name order into a (frames, 3, height, width) video.
Video import_frames(const std::filesystem::path& dir);

}  // namespace vedit
