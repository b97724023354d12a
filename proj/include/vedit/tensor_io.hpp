#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vedit/tensor.hpp"

namespace vedit {

// LAT1 tensor file: magic "LAT1", version u32, rank u32, dims u32 each,
// float32 little-endian payload, CRC32 of all preceding bytes.
std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::uint8_t> bytes, const std::string& context = "tensor");

void save_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace vedit
