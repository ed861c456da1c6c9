#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rearrange {

using Rgb = std::array<std::uint8_t, 3>;

/// Interleaved 8-bit RGB raster, row-major, origin top-left.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    Image() = default;
    Image(int w, int h, Rgb fill = {0, 0, 0});

    bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

    Rgb at(int x, int y) const
    {
        const auto* p = &data[(static_cast<std::size_t>(y) * width + x) * 3];
        return {p[0], p[1], p[2]};
    }

    void set(int x, int y, Rgb c)
    {
        auto* p = &data[(static_cast<std::size_t>(y) * width + x) * 3];
        p[0] = c[0], p[1] = c[1], p[2] = c[2];
    }

    bool operator==(const Image&) const = default;
};

/// Single-channel raster with 8 or 16 significant bits (masks, depth).
struct GrayImage {
    int width = 0;
    int height = 0;
    int bit_depth = 8;
    std::vector<std::uint16_t> data;

    std::uint16_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

std::vector<std::uint8_t> encode_png(const Image& image);
void write_png(const Image& image, const std::filesystem::path& path);
Image read_png_rgb(const std::filesystem::path& path);
Image decode_png_rgb(std::span<const std::uint8_t> bytes);

void write_gray_png(const GrayImage& image, const std::filesystem::path& path);
GrayImage read_png_gray(const std::filesystem::path& path);

/// Palette PNG: pixel values are palette indices.
void write_indexed_png(const std::vector<std::uint8_t>& indices, int width, int height,
                       const std::vector<Rgb>& palette, const std::filesystem::path& path);

std::vector<std::uint8_t> encode_jpeg(const Image& image, int quality = 90);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// JPEG (quality 90) wrapped in base64, as sent over the wire.
std::string encode_jpeg_base64(const Image& image);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace rearrange
