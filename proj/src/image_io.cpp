#include "dcv/io/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <vector>

namespace dcv::io {

namespace {

std::string lower_ext(const std::string& path) {
    const auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

Tensor<double> from_bytes(const std::vector<unsigned char>& bytes, std::int64_t c, std::int64_t h,
                          std::int64_t w) {
    Tensor<double> img = Tensor<double>::zeros({c, h, w});
    double* p = img.data();
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            for (std::int64_t ch = 0; ch < c; ++ch)
                p[(ch * h + y) * w + x] = bytes[static_cast<std::size_t>((y * w + x) * c + ch)] / 255.0;
    return img;
}

std::vector<unsigned char> to_bytes(const Tensor<double>& img) {
    const std::int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(c * h * w));
    const double* p = img.data();
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            for (std::int64_t ch = 0; ch < c; ++ch) {
                const double v = std::clamp(p[(ch * h + y) * w + x], 0.0, 1.0);
                bytes[static_cast<std::size_t>((y * w + x) * c + ch)] =
                    static_cast<unsigned char>(v * 255.0 + 0.5);
            }
    return bytes;
}

Tensor<double> load_png(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    std::vector<unsigned char> bytes;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("failed to decode " + path);
    }
    png_init_io(png, f.get());
    png_read_info(png, info);
    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    const std::size_t channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("unsupported channel count in " + path);
    }
    bytes.resize(static_cast<std::size_t>(w) * h * channels);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = bytes.data() + static_cast<std::size_t>(y) * w * channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return from_bytes(bytes, static_cast<std::int64_t>(channels), static_cast<std::int64_t>(h),
                      static_cast<std::int64_t>(w));
}

void save_png(const std::string& path, const Tensor<double>& img) {
    const std::int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    const auto bytes = to_bytes(img);
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("failed to encode " + path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (std::int64_t y = 0; y < h; ++y)
        rows[static_cast<std::size_t>(y)] =
            const_cast<png_bytep>(bytes.data() + static_cast<std::size_t>(y * w * c));
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

int read_pnm_token(std::FILE* f) {
    int ch = std::fgetc(f);
    while (ch != EOF) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = std::fgetc(f);
        } else if (!std::isspace(ch)) {
            break;
        }
        ch = std::fgetc(f);
    }
    if (ch == EOF) throw std::runtime_error("truncated pnm header");
    int value = 0;
    while (ch != EOF && std::isdigit(ch)) {
        value = value * 10 + (ch - '0');
        ch = std::fgetc(f);
    }
    return value;
}

Tensor<double> load_pnm(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("cannot open " + path);
    const int magic0 = std::fgetc(f.get());
    const int magic1 = std::fgetc(f.get());
    if (magic0 != 'P' || (magic1 != '5' && magic1 != '6'))
        throw std::runtime_error(path + " is not a binary pgm/ppm");
    const std::int64_t c = magic1 == '5' ? 1 : 3;
    const std::int64_t w = read_pnm_token(f.get());
    const std::int64_t h = read_pnm_token(f.get());
    const std::int64_t maxval = read_pnm_token(f.get());
    if (maxval != 255) throw std::runtime_error("only maxval 255 pnm supported");
    std::vector<unsigned char> bytes(static_cast<std::size_t>(c * h * w));
    if (std::fread(bytes.data(), 1, bytes.size(), f.get()) != bytes.size())
        throw std::runtime_error("truncated pixel data in " + path);
    return from_bytes(bytes, c, h, w);
}

void save_pnm(const std::string& path, const Tensor<double>& img) {
    const std::int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    const auto bytes = to_bytes(img);
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    std::fprintf(f.get(), "P%c\n%lld %lld\n255\n", c == 1 ? '5' : '6', static_cast<long long>(w),
                 static_cast<long long>(h));
    if (std::fwrite(bytes.data(), 1, bytes.size(), f.get()) != bytes.size())
        throw std::runtime_error("short write to " + path);
}

}  // namespace

Tensor<double> load_image(const std::string& path) {
    const std::string ext = lower_ext(path);
    if (ext == "png") return load_png(path);
    if (ext == "ppm" || ext == "pgm") return load_pnm(path);
    throw std::runtime_error("unsupported image extension: " + path);
}

void save_image(const std::string& path, const Tensor<double>& img) {
    if (img.rank() != 3 || (img.dim(0) != 1 && img.dim(0) != 3))
        throw std::invalid_argument("save_image wants {C,H,W} with C of 1 or 3");
    const std::string ext = lower_ext(path);
    if (ext == "png") {
        save_png(path, img);
    } else if (ext == "ppm" || ext == "pgm") {
        save_pnm(path, img);
    } else {
        throw std::runtime_error("unsupported image extension: " + path);
    }
}

}  // namespace dcv::io
