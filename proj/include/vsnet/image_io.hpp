#pragma once

#include <string>
#include <vector>

#include "vsnet/tensor.hpp"

namespace vsnet {

// Row-major, channel-interleaved pixels in [0,1]. channels is 1 (gray) or
// 3 (RGB); codecs quantize to 8 bits on write.
struct Image {
    int h = 0;
    int w = 0;
    int channels = 0;
    std::vector<double> data;  // h * w * channels

    double at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * w + x) * channels + c];
    }
    double& at(int y, int x, int c) {
        return data[(static_cast<std::size_t>(y) * w + x) * channels + c];
    }
};

Image make_image(int h, int w, int channels, double fill = 0.0);

// PNG, bit depth 8, non-interlaced. Reader accepts gray, gray+alpha, RGB
// and RGBA (alpha dropped) and undoes row filters 0-4; writer emits
// filter-0 rows. Chunk CRCs are verified.
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);

// PGM (P5) for 1 channel, PPM (P6) for 3, 8-bit maxval.
Image read_pnm(const std::string& path);
void write_pnm(const std::string& path, const Image& img);

// Dispatch on extension: .png, .pgm, .ppm.
Image read_image(const std::string& path);
void write_image(const std::string& path, const Image& img);

// Planar {1, C, H, W} tensor bridge; values pass through unquantized.
Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor& t);

}  // namespace vsnet
