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
#include "palsylm/image.hpp"

#include "palsylm/errors.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>

#include <jpeglib.h>

namespace palsylm {

std::uint8_t rec601_luma(std::uint8_t r, std::uint8_t g, std::uint8_t b)
{
    // Integer form of the weighted sum so that exact .5 cases round up.
    const unsigned v = 299u * r + 587u * g + 114u * b;
    return static_cast<std::uint8_t>((v + 500u) / 1000u);
}

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
    {
        throw IoError("cannot open image: " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool is_png(std::span<const std::uint8_t> bytes)
{
    return bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0;
}

bool is_jpeg(std::span<const std::uint8_t> bytes)
{
    return bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF;
}

struct PngImage
{
    png_image image{};
    PngImage()
    {
        image.version = PNG_IMAGE_VERSION;
    }
    ~PngImage() { png_image_free(&image); }
};

GrayImage decode_png(std::span<const std::uint8_t> bytes, const std::string& name)
{
    PngImage png;
    if (!png_image_begin_read_from_memory(&png.image, bytes.data(), bytes.size()))
    {
        throw DecodeError("invalid PNG " + name + ": " + png.image.message);
    }
    png.image.format = PNG_FORMAT_RGB;
    const int w = static_cast<int>(png.image.width);
    const int h = static_cast<int>(png.image.height);
    std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(png.image));
    if (!png_image_finish_read(&png.image, nullptr, rgb.data(), 0, nullptr))
    {
        throw DecodeError("cannot decode PNG " + name + ": " + png.image.message);
    }
    GrayImage out(w, h);
    auto dst = out.data();
    for (std::size_t i = 0; i < dst.size(); ++i)
    {
        dst[i] = rec601_luma(rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]);
    }
    return out;
}

struct JpegErrorManager
{
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo)
{
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

// Corrupt-data warnings (e.g. premature end of stream) are treated as fatal.
void jpeg_emit_message(j_common_ptr cinfo, int level)
{
    if (level < 0)
    {
        jpeg_error_exit(cinfo);
    }
}

GrayImage decode_jpeg(std::span<const std::uint8_t> bytes, const std::string& name, bool header_only,
                      std::pair<int, int>* size)
{
    jpeg_decompress_struct cinfo{};
    JpegErrorManager err{};
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    err.base.emit_message = jpeg_emit_message;
    // Everything touched after setjmp lives outside this frame's automatic
    // storage or is volatile-safe (no locals modified between setjmp/longjmp).
    auto out = std::make_unique<GrayImage>();
    std::vector<std::uint8_t> row;
    if (setjmp(err.jump))
    {
        jpeg_destroy_decompress(&cinfo);
        throw DecodeError("cannot decode JPEG " + name + ": " + err.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    if (header_only)
    {
        *size = {static_cast<int>(cinfo.image_width), static_cast<int>(cinfo.image_height)};
        jpeg_destroy_decompress(&cinfo);
        return {};
    }
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    *out = GrayImage(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height));
    row.resize(static_cast<std::size_t>(cinfo.output_width) * 3);
    while (cinfo.output_scanline < cinfo.output_height)
    {
        JSAMPROW ptr = row.data();
        const int y = static_cast<int>(cinfo.output_scanline);
        jpeg_read_scanlines(&cinfo, &ptr, 1);
        for (int x = 0; x < out->width(); ++x)
        {
            out->at(x, y) = rec601_luma(row[3 * x], row[3 * x + 1], row[3 * x + 2]);
        }
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return std::move(*out);
}

} // namespace

GrayImage load_image_grayscale(const std::filesystem::path& path)
{
    const auto bytes = read_file(path);
    if (is_png(bytes))
    {
        return decode_png(bytes, path.string());
    }
    if (is_jpeg(bytes))
    {
        return decode_jpeg(bytes, path.string(), false, nullptr);
    }
    throw DecodeError("not a PNG or JPEG file: " + path.string());
}

std::pair<int, int> probe_image_size(const std::filesystem::path& path)
{
    const auto bytes = read_file(path);
    if (is_png(bytes))
    {
        PngImage png;
        if (!png_image_begin_read_from_memory(&png.image, bytes.data(), bytes.size()))
        {
            throw DecodeError("invalid PNG " + path.string() + ": " + png.image.message);
        }
        return {static_cast<int>(png.image.width), static_cast<int>(png.image.height)};
    }
    if (is_jpeg(bytes))
    {
        std::pair<int, int> size{};
        decode_jpeg(bytes, path.string(), true, &size);
        return size;
    }
    throw DecodeError("not a PNG or JPEG file: " + path.string());
}

namespace {

void write_png(const std::filesystem::path& path, int width, int height, std::uint32_t format, const void* data)
{
    PngImage png;
    png.image.width = static_cast<png_uint_32>(width);
    png.image.height = static_cast<png_uint_32>(height);
    png.image.format = format;
    if (!png_image_write_to_file(&png.image, path.string().c_str(), 0, data, 0, nullptr))
    {
        throw IoError("cannot write PNG " + path.string() + ": " + png.image.message);
    }
}

} // namespace

void write_png_gray(const std::filesystem::path& path, const GrayImage& image)
{
    write_png(path, image.width(), image.height(), PNG_FORMAT_GRAY, image.data().data());
}

void write_png_rgb(const std::filesystem::path& path, int width, int height, std::span<const std::uint8_t> rgb)
{
    if (rgb.size() != static_cast<std::size_t>(width) * height * 3)
    {
        throw std::invalid_argument("write_png_rgb: buffer size mismatch");
    }
    write_png(path, width, height, PNG_FORMAT_RGB, rgb.data());
}

void write_jpeg_rgb(const std::filesystem::path& path, int width, int height, std::span<const std::uint8_t> rgb,
                    int quality)
{
    if (rgb.size() != static_cast<std::size_t>(width) * height * 3)
    {
        throw std::invalid_argument("write_jpeg_rgb: buffer size mismatch");
    }
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> file(std::fopen(path.string().c_str(), "wb"), &std::fclose);
    if (!file)
    {
        throw IoError("cannot open for writing: " + path.string());
    }
    jpeg_compress_struct cinfo{};
    jpeg_error_mgr jerr{};
    cinfo.err = jpeg_std_error(&jerr);
    jpeg_create_compress(&cinfo);
    jpeg_stdio_dest(&cinfo, file.get());
    cinfo.image_width = static_cast<JDIMENSION>(width);
    cinfo.image_height = static_cast<JDIMENSION>(height);
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height)
    {
        auto* row = const_cast<JSAMPLE*>(rgb.data() + static_cast<std::size_t>(cinfo.next_scanline) * width * 3);
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
}

} // namespace palsylm
