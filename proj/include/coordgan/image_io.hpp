#pragma once

// Minimal PNG/JPEG IO. 8-bit images only; RGB or single-channel gray.

#include <cstdint>
#include <string>
#include <vector>

#include "coordgan/tensor.hpp"

namespace coordgan::img {

struct ImageU8 {
    int64_t height = 0;
    int64_t width = 0;
    int64_t channels = 0;  // 1 or 3
    std::vector<uint8_t> pixels;  // HWC
};

// Reads PNG or JPEG (sniffed from magic bytes). Gray stays 1-channel,
// everything else lands as RGB. Throws on unreadable files.
ImageU8 read_image(const std::string& path);

void write_png_rgb(const std::string& path, const ImageU8& image);
void write_png_gray(const std::string& path, const ImageU8& image);

// [-1,1] float [H,W,3] <-> 8-bit, clamped on export.
ImageU8 from_float_hwc(const TensorT<float>& hwc);
TensorT<float> to_float_hwc(const ImageU8& image);

}  // namespace coordgan::img
