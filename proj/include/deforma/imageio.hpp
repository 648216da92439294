#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "deforma/renderer.hpp"

namespace deforma {

/// Binary PPM (P6), 8 bits per channel, colours clamped to [0, 1].
std::string encode_ppm(const ImageBuffer& image);
void write_ppm(const std::filesystem::path& path, const ImageBuffer& image);

/// Decoded PPM pixels scaled back to [0, 1].
ImageBuffer read_ppm(const std::filesystem::path& path);

/// Depth plane: text line `DP01 W H`, then W*H little-endian float32
/// values row-major; absent depth is stored as NaN.
std::string encode_depth(const ImageBuffer& image);
void write_depth(const std::filesystem::path& path, const ImageBuffer& image);
std::vector<float> read_depth(const std::filesystem::path& path, int& width, int& height);

double psnr(const ImageBuffer& a, const ImageBuffer& b);
double mean_absolute_error(const ImageBuffer& a, const ImageBuffer& b);

}  // namespace deforma
