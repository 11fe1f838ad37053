#pragma once

#include <string>
#include <vector>

#include "poisonbench/image.hpp"

namespace poisonbench {

// 8-bit grayscale (C=1) or RGB (C=3) PNG. Round-trips are bit-exact.
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

std::vector<uint8_t> encode_png(const Image& img);
Image decode_png(const uint8_t* data, size_t len);

}  // namespace poisonbench
