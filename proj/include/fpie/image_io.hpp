#pragma once

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

#include "fpie/tensor.hpp"

namespace fpie {

struct ImageIoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Reads an 8-bit PNG as (1,3,H,W) in [0,1]; any PNG color type is expanded
/// to RGB.
inline Tensor read_png(const std::string& path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw ImageIoError("png: cannot read '" + path + "': " + image.message);
    }
    image.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw ImageIoError("png: decode failed for '" + path + "': " + msg);
    }
    const int64_t h = image.height, w = image.width;
    Tensor t({1, 3, h, w});
    for (int64_t y = 0; y < h; ++y) {
        const unsigned char* row = buf.data() + y * w * 3;
        for (int64_t x = 0; x < w; ++x) {
            for (int64_t c = 0; c < 3; ++c) {
                t.at(0, c, y, x) = static_cast<float>(row[x * 3 + c]) / 255.0f;
            }
        }
    }
    return t;
}

/// Writes a (1,3,H,W) tensor in [0,1] as an 8-bit RGB PNG (values rounded,
/// out-of-range values clamped).
inline void write_png(const std::string& path, const Tensor& img) {
    const Shape s = img.shape();
    if (s.n != 1 || s.c != 3) {
        throw ImageIoError("png: expected a (1,3,H,W) tensor, got " + s.str());
    }
    std::vector<unsigned char> buf(static_cast<size_t>(s.h * s.w * 3));
    for (int64_t y = 0; y < s.h; ++y) {
        for (int64_t x = 0; x < s.w; ++x) {
            for (int64_t c = 0; c < 3; ++c) {
                const float v = std::clamp(img.at(0, c, y, x), 0.0f, 1.0f);
                buf[(y * s.w + x) * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0f));
            }
        }
    }
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.format = PNG_FORMAT_RGB;
    image.width = static_cast<png_uint_32>(s.w);
    image.height = static_cast<png_uint_32>(s.h);
    if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr)) {
        throw ImageIoError("png: write failed for '" + path + "': " + image.message);
    }
}

} // namespace fpie
