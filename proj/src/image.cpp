#include <rearrange/image.hpp>

#include <rearrange/error.hpp>

#include <jpeglib.h>
#include <openssl/evp.h>
#include <png.h>

#include <fmt/format.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

namespace rearrange {

Image::Image(int w, int h, Rgb fill) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3)
{
    for (std::size_t i = 0; i < data.size(); i += 3) {
        data[i] = fill[0], data[i + 1] = fill[1], data[i + 2] = fill[2];
    }
}

namespace {

[[noreturn]] void png_fail(const std::string& what)
{
    throw Error(ErrorCode::ImageIoError, what);
}

void png_error_fn(png_structp png, png_const_charp msg)
{
    auto* sink = static_cast<std::string*>(png_get_error_ptr(png));
    if (sink) *sink = msg;
    png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

struct PngWriter {
    png_structp png = nullptr;
    png_infop info = nullptr;
    std::string error;

    PngWriter()
    {
        png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, png_error_fn, png_warning_fn);
        if (!png) png_fail("png_create_write_struct failed");
        info = png_create_info_struct(png);
        if (!info) png_fail("png_create_info_struct failed");
    }
    ~PngWriter() { png_destroy_write_struct(&png, &info); }
};

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    std::string error;

    PngReader()
    {
        png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, png_error_fn, png_warning_fn);
        if (!png) png_fail("png_create_read_struct failed");
        info = png_create_info_struct(png);
        if (!info) png_fail("png_create_info_struct failed");
    }
    ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
};

void append_bytes(png_structp png, png_bytep data, png_size_t length)
{
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}

void no_flush(png_structp) {}

struct ByteSource {
    std::span<const std::uint8_t> bytes;
    std::size_t offset = 0;
};

void read_bytes(png_structp png, png_bytep data, png_size_t length)
{
    auto* src = static_cast<ByteSource*>(png_get_io_ptr(png));
    if (src->offset + length > src->bytes.size()) {
        png_error(png, "unexpected end of PNG data");
    }
    std::memcpy(data, src->bytes.data() + src->offset, length);
    src->offset += length;
}

// Decodes any PNG into 8-bit RGB or single-channel gray (8 or 16 bit).
struct DecodedPng {
    int width = 0;
    int height = 0;
    int channels = 0;
    int bit_depth = 8;
    std::vector<std::uint8_t> rows;
};

DecodedPng decode_png(std::span<const std::uint8_t> bytes, bool want_gray)
{
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
        png_fail("not a PNG stream");
    }
    PngReader reader;
    if (setjmp(png_jmpbuf(reader.png))) png_fail("libpng: " + reader.error);
    ByteSource source{bytes, 0};
    png_set_read_fn(reader.png, &source, read_bytes);
    png_read_info(reader.png, reader.info);

    const int color_type = png_get_color_type(reader.png, reader.info);
    int bit_depth = png_get_bit_depth(reader.png, reader.info);

    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(reader.png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(reader.png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(reader.png);
    if (want_gray) {
        if (color_type == PNG_COLOR_TYPE_RGB || color_type == PNG_COLOR_TYPE_RGB_ALPHA ||
            color_type == PNG_COLOR_TYPE_PALETTE) {
            png_set_rgb_to_gray_fixed(reader.png, 1, -1, -1);
        }
    } else {
        if (bit_depth == 16) png_set_strip_16(reader.png);
        if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
            png_set_gray_to_rgb(reader.png);
        }
    }
    png_read_update_info(reader.png, reader.info);

    DecodedPng out;
    out.width = static_cast<int>(png_get_image_width(reader.png, reader.info));
    out.height = static_cast<int>(png_get_image_height(reader.png, reader.info));
    out.channels = png_get_channels(reader.png, reader.info);
    bit_depth = png_get_bit_depth(reader.png, reader.info);
    out.bit_depth = bit_depth;
    const std::size_t stride = png_get_rowbytes(reader.png, reader.info);
    out.rows.resize(stride * out.height);
    std::vector<png_bytep> row_ptrs(out.height);
    for (int y = 0; y < out.height; ++y) row_ptrs[y] = out.rows.data() + stride * y;
    png_read_image(reader.png, row_ptrs.data());
    png_read_end(reader.png, nullptr);
    return out;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image& image)
{
    std::vector<std::uint8_t> out;
    PngWriter writer;
    if (setjmp(png_jmpbuf(writer.png))) png_fail("libpng: " + writer.error);
    png_set_write_fn(writer.png, &out, append_bytes, no_flush);
    png_set_IHDR(writer.png, writer.info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(writer.png, writer.info);
    for (int y = 0; y < image.height; ++y) {
        png_write_row(writer.png, const_cast<png_bytep>(image.data.data() + static_cast<std::size_t>(y) * image.width * 3));
    }
    png_write_end(writer.png, nullptr);
    return out;
}

void write_png(const Image& image, const std::filesystem::path& path)
{
    write_file_bytes(path, encode_png(image));
}

Image decode_png_rgb(std::span<const std::uint8_t> bytes)
{
    DecodedPng png = decode_png(bytes, false);
    if (png.channels != 3) png_fail(fmt::format("expected 3 channels after conversion, got {}", png.channels));
    Image out;
    out.width = png.width;
    out.height = png.height;
    out.data = std::move(png.rows);
    return out;
}

Image read_png_rgb(const std::filesystem::path& path)
{
    return decode_png_rgb(read_file_bytes(path));
}

GrayImage read_png_gray(const std::filesystem::path& path)
{
    const auto bytes = read_file_bytes(path);
    DecodedPng png = decode_png(bytes, true);
    if (png.channels != 1) png_fail(fmt::format("{}: expected single-channel PNG", path.string()));
    GrayImage out;
    out.width = png.width;
    out.height = png.height;
    out.bit_depth = png.bit_depth;
    out.data.resize(static_cast<std::size_t>(png.width) * png.height);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = png.bit_depth == 16
                          ? static_cast<std::uint16_t>((png.rows[2 * i] << 8) | png.rows[2 * i + 1])
                          : png.rows[i];
    }
    return out;
}

void write_gray_png(const GrayImage& image, const std::filesystem::path& path)
{
    std::vector<std::uint8_t> out;
    PngWriter writer;
    if (setjmp(png_jmpbuf(writer.png))) png_fail("libpng: " + writer.error);
    png_set_write_fn(writer.png, &out, append_bytes, no_flush);
    const int depth = image.bit_depth == 16 ? 16 : 8;
    png_set_IHDR(writer.png, writer.info, image.width, image.height, depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(writer.png, writer.info);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(image.width) * (depth / 8));
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            const std::uint16_t v = image.at(x, y);
            if (depth == 16) {
                row[2 * x] = static_cast<std::uint8_t>(v >> 8);
                row[2 * x + 1] = static_cast<std::uint8_t>(v & 0xff);
            } else {
                row[x] = static_cast<std::uint8_t>(v);
            }
        }
        png_write_row(writer.png, row.data());
    }
    png_write_end(writer.png, nullptr);
    write_file_bytes(path, out);
}

void write_indexed_png(const std::vector<std::uint8_t>& indices, int width, int height,
                       const std::vector<Rgb>& palette, const std::filesystem::path& path)
{
    if (palette.empty() || palette.size() > 256) {
        throw Error(ErrorCode::InvalidArgument, "palette must hold 1..256 entries");
    }
    std::vector<std::uint8_t> out;
    PngWriter writer;
    if (setjmp(png_jmpbuf(writer.png))) png_fail("libpng: " + writer.error);
    png_set_write_fn(writer.png, &out, append_bytes, no_flush);
    png_set_IHDR(writer.png, writer.info, width, height, 8, PNG_COLOR_TYPE_PALETTE, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    std::vector<png_color> colors(palette.size());
    for (std::size_t i = 0; i < palette.size(); ++i) {
        colors[i] = {palette[i][0], palette[i][1], palette[i][2]};
    }
    png_set_PLTE(writer.png, writer.info, colors.data(), static_cast<int>(colors.size()));
    png_write_info(writer.png, writer.info);
    for (int y = 0; y < height; ++y) {
        png_write_row(writer.png, const_cast<png_bytep>(indices.data() + static_cast<std::size_t>(y) * width));
    }
    png_write_end(writer.png, nullptr);
    write_file_bytes(path, out);
}

namespace {

struct JpegErrorManager {
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

}  // namespace

std::vector<std::uint8_t> encode_jpeg(const Image& image, int quality)
{
    jpeg_compress_struct cinfo{};
    JpegErrorManager jerr{};
    cinfo.err = jpeg_std_error(&jerr.base);
    jerr.base.error_exit = jpeg_error_exit;

    unsigned char* buffer = nullptr;
    unsigned long size = 0;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_compress(&cinfo);
        std::free(buffer);
        throw Error(ErrorCode::ImageIoError, fmt::format("libjpeg: {}", jerr.message));
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &buffer, &size);
    cinfo.image_width = static_cast<JDIMENSION>(image.width);
    cinfo.image_height = static_cast<JDIMENSION>(image.height);
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        JSAMPROW row = const_cast<JSAMPROW>(image.data.data() + static_cast<std::size_t>(cinfo.next_scanline) * image.width * 3);
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    std::vector<std::uint8_t> out(buffer, buffer + size);
    jpeg_destroy_compress(&cinfo);
    std::free(buffer);
    return out;
}

namespace {
constexpr std::string_view kBase64Alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::span<const std::uint8_t> bytes)
{
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out += kBase64Alphabet[(v >> 18) & 63];
        out += kBase64Alphabet[(v >> 12) & 63];
        out += kBase64Alphabet[(v >> 6) & 63];
        out += kBase64Alphabet[v & 63];
    }
    const std::size_t rest = bytes.size() - i;
    if (rest == 1) {
        const std::uint32_t v = bytes[i] << 16;
        out += kBase64Alphabet[(v >> 18) & 63];
        out += kBase64Alphabet[(v >> 12) & 63];
        out += "==";
    } else if (rest == 2) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
        out += kBase64Alphabet[(v >> 18) & 63];
        out += kBase64Alphabet[(v >> 12) & 63];
        out += kBase64Alphabet[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text)
{
    if (text.size() % 4 != 0) throw Error(ErrorCode::InvalidArgument, "base64 length not a multiple of 4");
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        std::uint32_t v = 0;
        int pad = 0;
        for (int j = 0; j < 4; ++j) {
            const char c = text[i + j];
            std::uint32_t digit = 0;
            if (c == '=') {
                ++pad;
            } else {
                const auto pos = kBase64Alphabet.find(c);
                if (pos == std::string_view::npos || pad > 0) {
                    throw Error(ErrorCode::InvalidArgument, "invalid base64 character");
                }
                digit = static_cast<std::uint32_t>(pos);
            }
            v = (v << 6) | digit;
        }
        out.push_back(static_cast<std::uint8_t>(v >> 16));
        if (pad < 2) out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
        if (pad < 1) out.push_back(static_cast<std::uint8_t>(v & 0xff));
    }
    return out;
}

std::string encode_jpeg_base64(const Image& image)
{
    return base64_encode(encode_jpeg(image, 90));
}

std::string sha256_hex(std::span<const std::uint8_t> bytes)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
        throw Error(ErrorCode::InvalidArgument, "SHA-256 digest failed");
    }
    std::string hex;
    hex.reserve(length * 2);
    for (unsigned int i = 0; i < length; ++i) hex += fmt::format("{:02x}", digest[i]);
    return hex;
}

std::string sha256_hex(std::string_view text)
{
    return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string sha256_file(const std::filesystem::path& path)
{
    return sha256_hex(read_file_bytes(path));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::MissingAsset, path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::ImageIoError, fmt::format("cannot write {}", path.string()));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_text_file(const std::filesystem::path& path, std::string_view text)
{
    write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace rearrange
