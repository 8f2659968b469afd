#pragma once

#include <png.h>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "bmcl/error.hpp"

namespace bmcl {

// Single image, channel-major float storage, values in [0, 1].
struct Image {
    int c = 0, h = 0, w = 0;
    std::vector<float> v;

    Image() = default;
    Image(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, 0.0f) {}

    float& at(int ch, int y, int x) { return v[(static_cast<size_t>(ch) * h + y) * w + x]; }
    float at(int ch, int y, int x) const { return v[(static_cast<size_t>(ch) * h + y) * w + x]; }
    size_t size() const { return v.size(); }
};

// N images of identical shape, packed N x C x H x W.
struct ImageArray {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<float> data;

    void resize(int n_, int c_, int h_, int w_) {
        n = n_;
        c = c_;
        h = h_;
        w = w_;
        data.assign(static_cast<size_t>(n_) * c_ * h_ * w_, 0.0f);
    }

    size_t stride() const { return static_cast<size_t>(c) * h * w; }
    float* at(int i) { return data.data() + stride() * static_cast<size_t>(i); }
    const float* at(int i) const { return data.data() + stride() * static_cast<size_t>(i); }

    Image image(int i) const {
        Image img(c, h, w);
        std::memcpy(img.v.data(), at(i), stride() * sizeof(float));
        return img;
    }

    void set_image(int i, const Image& img) {
        std::memcpy(at(i), img.v.data(), stride() * sizeof(float));
    }
};

// ---------------------------------------------------------------------------
// Binary image container: magic "BMCL1", little-endian u32 N, C, H, W, then
// N*C*H*W float32 values.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw IntegrityError("container truncated while reading header");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace detail

inline void save_image_container(const std::string& path, const ImageArray& images) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IntegrityError("cannot open container for writing: " + path);
    out.write("BMCL1", 5);
    detail::write_u32(out, static_cast<uint32_t>(images.n));
    detail::write_u32(out, static_cast<uint32_t>(images.c));
    detail::write_u32(out, static_cast<uint32_t>(images.h));
    detail::write_u32(out, static_cast<uint32_t>(images.w));
    static_assert(sizeof(float) == 4);
    out.write(reinterpret_cast<const char*>(images.data.data()),
              static_cast<std::streamsize>(images.data.size() * sizeof(float)));
    if (!out) throw IntegrityError("write failed for container: " + path);
}

inline ImageArray load_image_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IntegrityError("cannot open container: " + path);
    char magic[5];
    in.read(magic, 5);
    if (!in || std::memcmp(magic, "BMCL1", 5) != 0) {
        throw IntegrityError("bad container magic in " + path);
    }
    ImageArray images;
    const uint32_t n = detail::read_u32(in);
    const uint32_t c = detail::read_u32(in);
    const uint32_t h = detail::read_u32(in);
    const uint32_t w = detail::read_u32(in);
    images.resize(static_cast<int>(n), static_cast<int>(c), static_cast<int>(h), static_cast<int>(w));
    in.read(reinterpret_cast<char*>(images.data.data()),
            static_cast<std::streamsize>(images.data.size() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(images.data.size() * sizeof(float))) {
        throw IntegrityError("container truncated: " + path);
    }
    return images;
}

// ---------------------------------------------------------------------------
// PNG read/write via libpng. Grayscale input maps to one channel, RGB(A) to
// three; 8- and 16-bit depths are scaled into [0, 1].
// ---------------------------------------------------------------------------

inline Image load_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IntegrityError("cannot open png: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IntegrityError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw ParseError("png decode failed: " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);

    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);

    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    if (depth == 16) png_set_swap(png);  // little-endian u16
    png_read_update_info(png, info);

    const png_byte channels = png_get_channels(png, info);
    const png_byte out_depth = png_get_bit_depth(png, info);
    const size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<unsigned char> buffer(rowbytes * height);
    std::vector<png_bytep> rows(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = buffer.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);

    const int c = channels >= 3 ? 3 : 1;
    Image img(c, static_cast<int>(height), static_cast<int>(width));
    const double scale = out_depth == 16 ? 1.0 / 65535.0 : 1.0 / 255.0;
    for (png_uint_32 y = 0; y < height; ++y) {
        for (png_uint_32 x = 0; x < width; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                double value = 0.0;
                const size_t idx = (x * channels + static_cast<png_uint_32>(ch));
                if (out_depth == 16) {
                    const auto* p16 = reinterpret_cast<const uint16_t*>(rows[y]);
                    value = p16[idx] * scale;
                } else {
                    value = rows[y][idx] * scale;
                }
                img.at(ch, static_cast<int>(y), static_cast<int>(x)) = static_cast<float>(value);
            }
        }
    }
    return img;
}

inline void save_png(const std::string& path, const Image& img) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw IntegrityError("cannot open png for writing: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IntegrityError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IntegrityError("png encode failed: " + path);
    }
    png_init_io(png, fp);
    const int color = img.c >= 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
    const int out_c = img.c >= 3 ? 3 : 1;
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8, color,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<unsigned char> row(static_cast<size_t>(img.w) * out_c);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            for (int ch = 0; ch < out_c; ++ch) {
                float v = img.at(ch < img.c ? ch : 0, y, x);
                v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
                row[static_cast<size_t>(x) * out_c + ch] = static_cast<unsigned char>(v * 255.0f + 0.5f);
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

}  // namespace bmcl
