#include "common/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "common/error.hpp"

namespace crg {

ImageTensor::ImageTensor(int height, int width)
    : height_(height), width_(width) {
    require(height > 0 && width > 0, ErrorCode::Shape, "image dimensions must be positive");
    data_.assign(static_cast<std::size_t>(height) * width, -1.0f);
}

ImageTensor::ImageTensor(int height, int width, std::vector<float> data)
    : height_(height), width_(width), data_(std::move(data)) {
    require(height > 0 && width > 0, ErrorCode::Shape, "image dimensions must be positive");
    require(data_.size() == static_cast<std::size_t>(height) * width, ErrorCode::Shape,
            "image data size does not match " + std::to_string(height) + "x" + std::to_string(width));
}

void ImageTensor::validate() const {
    require(height_ > 0 && width_ > 0 &&
                data_.size() == static_cast<std::size_t>(height_) * width_,
            ErrorCode::Shape, "image dimensions do not match its data");
    for (float v : data_)
        require(std::isfinite(v) && v >= -1.0f && v <= 1.0f, ErrorCode::InvalidArgument,
                "image element outside [-1, 1]");
}

std::uint8_t quantize_pixel(float value) {
    double level = std::round((static_cast<double>(value) + 1.0) / 2.0 * 255.0);
    return static_cast<std::uint8_t>(std::clamp(level, 0.0, 255.0));
}

float dequantize_pixel(std::uint8_t level) {
    return static_cast<float>(static_cast<double>(level) / 255.0 * 2.0 - 1.0);
}

ImageTensor quantized(const ImageTensor& image) {
    std::vector<float> out(image.size());
    auto src = image.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = dequantize_pixel(quantize_pixel(src[i]));
    return ImageTensor(image.height(), image.width(), std::move(out));
}

namespace {

struct ReadCursor {
    std::span<const std::uint8_t> bytes;
    std::size_t offset = 0;
};

void read_from_memory(png_structp png, png_bytep out, png_size_t count) {
    auto* cursor = static_cast<ReadCursor*>(png_get_io_ptr(png));
    if (cursor->offset + count > cursor->bytes.size()) png_error(png, "unexpected end of PNG data");
    std::memcpy(out, cursor->bytes.data() + cursor->offset, count);
    cursor->offset += count;
}

void write_to_memory(png_structp png, png_bytep data, png_size_t count) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + count);
}

void flush_noop(png_structp) {}

}  // namespace

std::vector<std::uint8_t> encode_png(const ImageTensor& image) {
    require(!image.empty(), ErrorCode::Shape, "cannot encode an empty image");
    std::vector<std::uint8_t> out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorCode::Internal, "libpng allocation failed");
    }
    std::vector<std::uint8_t> rowbuf(static_cast<std::size_t>(image.width()));
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorCode::Io, "PNG encoding failed");
    }
    png_set_write_fn(png, &out, write_to_memory, flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width()),
                 static_cast<png_uint_32>(image.height()), 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int r = 0; r < image.height(); ++r) {
        for (int c = 0; c < image.width(); ++c) rowbuf[static_cast<std::size_t>(c)] = quantize_pixel(image.at(r, c));
        png_write_row(png, rowbuf.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

ImageTensor decode_png(std::span<const std::uint8_t> bytes) {
    require(bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0, ErrorCode::InvalidArgument,
            "data is not a PNG image");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorCode::Internal, "libpng allocation failed");
    }
    ReadCursor cursor{bytes, 0};
    std::vector<std::uint8_t> pixels;
    png_uint_32 width = 0, height = 0;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorCode::InvalidArgument, "malformed PNG image");
    }
    png_set_read_fn(png, &cursor, read_from_memory);
    png_read_info(png, info);
    width = png_get_image_width(png, info);
    height = png_get_image_height(png, info);
    int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE)
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    png_read_update_info(png, info);
    require(png_get_rowbytes(png, info) == width, ErrorCode::InvalidArgument,
            "unsupported PNG pixel layout");
    pixels.resize(static_cast<std::size_t>(width) * height);
    for (png_uint_32 r = 0; r < height; ++r) png_read_row(png, pixels.data() + static_cast<std::size_t>(r) * width, nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    std::vector<float> data(pixels.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = dequantize_pixel(pixels[i]);
    return ImageTensor(static_cast<int>(height), static_cast<int>(width), std::move(data));
}

void write_png(const std::filesystem::path& path, const ImageTensor& image) {
    auto bytes = encode_png(image);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::Io, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorCode::Io, "failed writing " + path.string());
}

ImageTensor read_png(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_png(bytes);
}

}  // namespace crg
