#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace crg {

// Grayscale image in the model domain [-1, 1], row-major.
class ImageTensor {
public:
    ImageTensor() = default;
    ImageTensor(int height, int width);
    ImageTensor(int height, int width, std::vector<float> data);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    int channels() const noexcept { return 1; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    float at(int row, int col) const { return data_[static_cast<std::size_t>(row) * width_ + col]; }
    float& at(int row, int col) { return data_[static_cast<std::size_t>(row) * width_ + col]; }

    std::span<const float> data() const noexcept { return data_; }
    std::span<float> data() noexcept { return data_; }

    bool operator==(const ImageTensor&) const = default;

    // Throws Error(Shape) on a dimension mismatch and Error(InvalidArgument)
    // on an element outside [-1, 1] or a non-finite element.
    void validate() const;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<float> data_;
};

// 8-bit quantization used for PNG storage: round((x + 1) / 2 * 255).
std::uint8_t quantize_pixel(float value);
float dequantize_pixel(std::uint8_t level);
// Round-trips an image through the 8-bit grid.
ImageTensor quantized(const ImageTensor& image);

std::vector<std::uint8_t> encode_png(const ImageTensor& image);
ImageTensor decode_png(std::span<const std::uint8_t> bytes);

void write_png(const std::filesystem::path& path, const ImageTensor& image);
ImageTensor read_png(const std::filesystem::path& path);

}  // namespace crg
