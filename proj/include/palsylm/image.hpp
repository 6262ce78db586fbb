/*
 * Copyright 2026 The palsylm Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace palsylm {

/// 8-bit single-channel raster, row-major.
class GrayImage
{
public:
    GrayImage() = default;
    GrayImage(int width, int height, std::uint8_t fill = 0)
        : width_(width), height_(height), pixels_(static_cast<std::size_t>(width) * height, fill)
    {
    }

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return pixels_.empty(); }

    std::uint8_t& at(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
    std::uint8_t at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }

    /// Nearest pixel to (x, y), with coordinates clamped to the raster.
    std::uint8_t sample_clamped(double x, double y) const
    {
        long ix = static_cast<long>(std::floor(x + 0.5));
        long iy = static_cast<long>(std::floor(y + 0.5));
        ix = ix < 0 ? 0 : (ix >= width_ ? width_ - 1 : ix);
        iy = iy < 0 ? 0 : (iy >= height_ ? height_ - 1 : iy);
        return pixels_[static_cast<std::size_t>(iy) * width_ + ix];
    }

    std::span<const std::uint8_t> data() const { return pixels_; }
    std::span<std::uint8_t> data() { return pixels_; }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> pixels_;
};

/// Rec.601 luma, 0.299 R + 0.587 G + 0.114 B, rounded half-up.
std::uint8_t rec601_luma(std::uint8_t r, std::uint8_t g, std::uint8_t b);

/// Decodes a PNG or JPEG (detected by signature) to grayscale.
/// Throws IoError if the file cannot be read, DecodeError if it is not a
/// decodable PNG/JPEG.
GrayImage load_image_grayscale(const std::filesystem::path& path);

/// Image dimensions without decoding pixels (PNG/JPEG header only).
std::pair<int, int> probe_image_size(const std::filesystem::path& path);

void write_png_gray(const std::filesystem::path& path, const GrayImage& image);
/// `rgb` holds width*height*3 interleaved bytes.
void write_png_rgb(const std::filesystem::path& path, int width, int height, std::span<const std::uint8_t> rgb);
void write_jpeg_rgb(const std::filesystem::path& path, int width, int height, std::span<const std::uint8_t> rgb,
                    int quality = 95);

} // namespace palsylm
