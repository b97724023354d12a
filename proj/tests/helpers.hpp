#pragma once

#include <filesystem>
#include <string>

#include "vedit/denoiser.hpp"
#include "vedit/tensor.hpp"
#include "vedit/random.hpp"

namespace testing {

// Small model used wherever the default size would only slow the tests down.
inline vedit::DenoiserConfig small_model(int blocks = 4) {
    vedit::DenoiserConfig c;
    c.num_blocks = blocks;
    c.model_dim = 16;
    c.heads = 2;
    c.token_patch = 2;
    c.channels = 3;
    return c;
}

inline vedit::Tensor random_tensor(const vedit::Shape& shape, std::uint64_t seed, double scale = 1.0) {
    vedit::NormalStream rng(seed);
    vedit::Tensor t(shape);
    for (auto& v : t.values()) v = scale * rng.next();
    return t;
}

// Fresh directory under the build tree, removed and recreated on each call.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::current_path() / ("scratch_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing
