#include "toyvlm/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "toyvlm/errors.hpp"

namespace toyvlm {

Image Image::filled(int h, int w, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (h <= 0 || w <= 0) throw InputError("Image::filled: non-positive size");
    Image img;
    img.height = h;
    img.width = w;
    img.pixels.resize(static_cast<std::size_t>(h) * w * 3);
    for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
        img.pixels[i] = r;
        img.pixels[i + 1] = g;
        img.pixels[i + 2] = b;
    }
    return img;
}

Image resize_bilinear(const Image& img, int out_h, int out_w) {
    if (!img.valid()) throw InputError("resize_bilinear: invalid input image");
    if (out_h <= 0 || out_w <= 0) throw InputError("resize_bilinear: non-positive output size");
    Image out;
    out.height = out_h;
    out.width = out_w;
    out.pixels.resize(static_cast<std::size_t>(out_h) * out_w * 3);
    const double sy = static_cast<double>(img.height) / out_h;
    const double sx = static_cast<double>(img.width) / out_w;
    for (int y = 0; y < out_h; ++y) {
        const double fy = (y + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        const double wy = fy - y0;
        y0 = std::clamp(y0, 0, img.height - 1);
        const int y1 = std::clamp(y0 + 1, 0, img.height - 1);
        for (int x = 0; x < out_w; ++x) {
            const double fx = (x + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            const double wx = fx - x0;
            x0 = std::clamp(x0, 0, img.width - 1);
            const int x1 = std::clamp(x0 + 1, 0, img.width - 1);
            for (int c = 0; c < 3; ++c) {
                const double v = (1 - wy) * ((1 - wx) * img.at(y0, x0)[c] + wx * img.at(y0, x1)[c]) +
                                 wy * ((1 - wx) * img.at(y1, x0)[c] + wx * img.at(y1, x1)[c]);
                out.at(y, x)[c] = static_cast<std::uint8_t>(std::clamp(v + 0.5, 0.0, 255.0));
            }
        }
    }
    return out;
}

Image resize_short_side_center_crop(const Image& img, int side) {
    if (!img.valid()) throw InputError("resize_short_side_center_crop: invalid input image");
    if (side <= 0) throw InputError("resize_short_side_center_crop: non-positive side");
    int rh, rw;
    if (img.height <= img.width) {
        rh = side;
        rw = std::max(side, static_cast<int>(std::lround(static_cast<double>(img.width) * side / img.height)));
    } else {
        rw = side;
        rh = std::max(side, static_cast<int>(std::lround(static_cast<double>(img.height) * side / img.width)));
    }
    Image resized = (rh == img.height && rw == img.width) ? img : resize_bilinear(img, rh, rw);
    const int oy = (rh - side) / 2;
    const int ox = (rw - side) / 2;
    Image out;
    out.height = side;
    out.width = side;
    out.pixels.resize(static_cast<std::size_t>(side) * side * 3);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x)[c] = resized.at(oy + y, ox + x)[c];
    return out;
}

void write_ppm(const Image& img, const std::string& path) {
    if (!img.valid()) throw InputError("write_ppm: invalid image");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("write_ppm: cannot open " + path);
    f << "P6\n" << img.width << " " << img.height << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (!f) throw IoError("write_ppm: write failed for " + path);
}

Image read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("read_ppm: cannot open " + path);
    std::string magic;
    f >> magic;
    if (magic != "P6") throw FormatError("read_ppm: not a P6 file: " + path);
    int w, h, maxval;
    f >> w >> h >> maxval;
    if (!f || w <= 0 || h <= 0 || maxval != 255) throw FormatError("read_ppm: bad header in " + path);
    f.get();  // single whitespace after header
    Image img;
    img.height = h;
    img.width = w;
    img.pixels.resize(static_cast<std::size_t>(h) * w * 3);
    f.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (!f) throw FormatError("read_ppm: truncated pixel data in " + path);
    return img;
}

}  // namespace toyvlm
