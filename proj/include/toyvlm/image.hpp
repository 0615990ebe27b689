#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace toyvlm {

// 8-bit RGB raster, row-major, interleaved channels.
struct Image {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;  // height*width*3

    static Image filled(int h, int w, std::uint8_t r, std::uint8_t g, std::uint8_t b);

    std::uint8_t* at(int y, int x) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
    const std::uint8_t* at(int y, int x) const {
        return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
    bool valid() const { return height > 0 && width > 0 && pixels.size() == static_cast<std::size_t>(height) * width * 3; }
};

Image resize_bilinear(const Image& img, int out_h, int out_w);

// Resize so the short side equals `side`, then crop the central side x side
// square.
Image resize_short_side_center_crop(const Image& img, int side);

// Binary PPM (P6).
void write_ppm(const Image& img, const std::string& path);
Image read_ppm(const std::string& path);

}  // namespace toyvlm
