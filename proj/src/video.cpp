#include "vedit/video.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "vedit/binary_io.hpp"
#include "vedit/errors.hpp"
#include "vedit/random.hpp"

namespace vedit {

Video make_synthetic_video(const SyntheticVideoSpec& spec) {
    require(spec.frames >= 1 && spec.channels >= 1 && spec.height >= 1 && spec.width >= 1,
            ErrorKind::invalid_argument, "synthetic video dimensions must be positive");
    require(spec.semi_major > 0.0 && spec.semi_minor > 0.0, ErrorKind::invalid_argument,
            "shape semi-axes must be positive");
    require(spec.shape_value >= 0.0 && spec.shape_value <= 1.0, ErrorKind::invalid_argument,
            "shape value must lie in [0, 1]");

    NormalStream rng(spec.seed);
    const auto F = static_cast<std::size_t>(spec.frames), C = static_cast<std::size_t>(spec.channels);
    const auto H = static_cast<std::size_t>(spec.height), W = static_cast<std::size_t>(spec.width);

    Video v(Shape{F, C, H, W});
    for (std::size_t c = 0; c < C; ++c) {
        const double fx = 0.05 + 0.15 * rng.uniform(), px = 6.0 * rng.uniform();
        const double fy = 0.05 + 0.15 * rng.uniform(), py = 6.0 * rng.uniform();
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                const double bg = 0.35 + 0.1 * std::sin(static_cast<double>(x) * fx + px) *
                                             std::cos(static_cast<double>(y) * fy + py);
                for (std::size_t f = 0; f < F; ++f) v.at(f, c, y, x) = bg;
            }
    }

    const double x0 = spec.start_x.value_or(spec.width * (0.25 + 0.25 * rng.uniform()));
    const double y0 = spec.start_y.value_or(spec.height * (1.0 / 3.0 + rng.uniform() / 3.0));
    for (std::size_t f = 0; f < F; ++f) {
        const double cx = x0 + spec.velocity_x * static_cast<double>(f);
        const double cy = y0 + spec.velocity_y * static_cast<double>(f);
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                const double dx = (static_cast<double>(x) - cx) / spec.semi_major;
                const double dy = (static_cast<double>(y) - cy) / spec.semi_minor;
                if (dx * dx + dy * dy <= 1.0)
                    for (std::size_t c = 0; c < C; ++c) v.at(f, c, y, x) = spec.shape_value;
            }
    }
    return v;
}

void write_ppm(const Video& video, std::size_t frame, const std::filesystem::path& path) {
    require(video.rank() == 4 && frame < video.dim(0), ErrorKind::shape_mismatch, "frame index out of range");
    const std::size_t C = video.dim(1), H = video.dim(2), W = video.dim(3);
    std::ostringstream header;
    header << "P6\n" << W << ' ' << H << "\n255\n";
    const std::string h = header.str();

    std::vector<std::uint8_t> bytes(h.begin(), h.end());
    bytes.reserve(h.size() + 3 * H * W);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const double val = video.at(frame, std::min(ch, C - 1), y, x);
                bytes.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(val, 0.0, 1.0) * 255.0)));
            }
    write_file(path, bytes);
}

Video read_ppm(const std::filesystem::path& path) {
    const auto data = read_file(path);
    std::size_t pos = 0;
    auto token = [&]() {
        while (pos < data.size()) {
            if (data[pos] == '#') {
                while (pos < data.size() && data[pos] != '\n') ++pos;
            } else if (std::isspace(data[pos])) {
                ++pos;
            } else {
                break;
            }
        }
        std::string t;
        while (pos < data.size() && !std::isspace(data[pos])) t.push_back(static_cast<char>(data[pos++]));
        return t;
    };
    const std::string ctx = path.string();
    if (token() != "P6") fail(ErrorKind::format, ctx + ": not a binary PPM");
    std::size_t W = 0, H = 0, maxval = 0;
    try {
        W = std::stoul(token());
        H = std::stoul(token());
        maxval = std::stoul(token());
    } catch (const std::exception&) {
        fail(ErrorKind::format, ctx + ": malformed PPM header");
    }
    if (maxval != 255 || W == 0 || H == 0) fail(ErrorKind::format, ctx + ": only 8-bit PPM is supported");
    ++pos;  // single whitespace after maxval
    if (data.size() < pos + 3 * W * H) fail(ErrorKind::format, ctx + ": truncated PPM payload");

    Video v(Shape{1, 3, H, W});
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
            for (std::size_t ch = 0; ch < 3; ++ch) v.at(0, ch, y, x) = data[pos++] / 255.0;
    return v;
}

std::vector<std::filesystem::path> export_frames(const Video& video, const std::filesystem::path& dir) {
    require(video.rank() == 4, ErrorKind::shape_mismatch, "video must be (frames, channels, height, width)");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());
    std::vector<std::filesystem::path> paths;
    for (std::size_t f = 0; f < video.dim(0); ++f) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%04zu.ppm", f);
        paths.push_back(dir / name);
        write_ppm(video, f, paths.back());
    }
    return paths;
}

Video import_frames(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    std::error_code ec;
    for (const auto& e : std::filesystem::directory_iterator(dir, ec)) {
        const auto name = e.path().filename().string();
        if (name.rfind("frame_", 0) == 0 && e.path().extension() == ".ppm") files.push_back(e.path());
    }
    if (ec) fail(ErrorKind::io, "cannot list " + dir.string() + ": " + ec.message());
    require(!files.empty(), ErrorKind::io, "no frame_*.ppm files in " + dir.string());
    std::sort(files.begin(), files.end());

    std::vector<Video> frames;
    for (const auto& f : files) frames.push_back(read_ppm(f));
    const std::size_t H = frames[0].dim(2), W = frames[0].dim(3);
    Video v(Shape{frames.size(), 3, H, W});
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (frames[i].dim(2) != H || frames[i].dim(3) != W)
            fail(ErrorKind::format, files[i].string() + ": frame size differs from the first frame");
        std::copy(frames[i].values().begin(), frames[i].values().end(), v.data() + i * 3 * H * W);
    }
    return v;
}

}  // namespace vedit
