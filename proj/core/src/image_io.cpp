#include "relight/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "relight/errors.hpp"

namespace relight {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw IoError("cannot open '" + path + "'");
    return f;
}

PixelImage from_rows(const std::vector<std::vector<unsigned char>>& rows, int h, int w,
                     int src_channels) {
    Tensor t = Tensor::zeros({h, w, 3});
    for (int y = 0; y < h; ++y) {
        const unsigned char* row = rows[static_cast<std::size_t>(y)].data();
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                int sc = src_channels == 1 ? 0 : c;
                t.at(y, x, c) = row[x * src_channels + sc] / 255.0;
            }
        }
    }
    PixelImage img;
    img.data = std::move(t);
    return img;
}

// libpng/libjpeg report errors through longjmp; buffers live outside the
// setjmp region so nothing with a destructor is skipped.
PixelImage read_png_file(const std::string& path) {
    FilePtr f = open_file(path, "rb");
    std::vector<std::vector<unsigned char>> rows;
    std::vector<png_bytep> row_ptrs;
    int h = 0, w = 0, channels = 0;

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng init failed for '" + path + "'");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng init failed for '" + path + "'");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("failed to decode PNG '" + path + "'");
    }
    png_init_io(png, f.get());
    png_read_info(png, info);

    png_byte color = png_get_color_type(png, info);
    png_byte depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    h = static_cast<int>(png_get_image_height(png, info));
    w = static_cast<int>(png_get_image_width(png, info));
    channels = png_get_channels(png, info);
    if (h <= 0 || w <= 0 || (channels != 1 && channels != 3)) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("unsupported PNG layout in '" + path + "'");
    }
    rows.assign(static_cast<std::size_t>(h),
                std::vector<unsigned char>(static_cast<std::size_t>(w) * channels));
    row_ptrs.resize(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) row_ptrs[static_cast<std::size_t>(y)] = rows[static_cast<std::size_t>(y)].data();
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return from_rows(rows, h, w, channels);
}

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    std::longjmp(mgr->jump, 1);
}

PixelImage read_jpeg_file(const std::string& path) {
    FilePtr f = open_file(path, "rb");
    std::vector<std::vector<unsigned char>> rows;
    jpeg_decompress_struct cinfo;
    JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw IoError("failed to decode JPEG '" + path + "'");
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, f.get());
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    int h = static_cast<int>(cinfo.output_height);
    int w = static_cast<int>(cinfo.output_width);
    rows.assign(static_cast<std::size_t>(h), std::vector<unsigned char>(static_cast<std::size_t>(w) * 3));
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = rows[cinfo.output_scanline].data();
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return from_rows(rows, h, w, 3);
}

}  // namespace

PixelImage read_image(const std::string& path) {
    unsigned char magic[4] = {0, 0, 0, 0};
    {
        FilePtr f = open_file(path, "rb");
        if (std::fread(magic, 1, 4, f.get()) < 2) throw IoError("cannot read '" + path + "'");
    }
    if (magic[0] == 0x89 && magic[1] == 'P') return read_png_file(path);
    if (magic[0] == 0xFF && magic[1] == 0xD8) return read_jpeg_file(path);
    throw IoError("'" + path + "' is neither PNG nor JPEG");
}

void write_png(const std::string& path, const PixelImage& img) {
    const Tensor& t = img.data;
    int h = t.dim(0), w = t.dim(1);
    std::vector<std::vector<unsigned char>> rows(static_cast<std::size_t>(h),
                                                 std::vector<unsigned char>(static_cast<std::size_t>(w) * 3));
    std::vector<png_bytep> row_ptrs(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                double v = std::clamp(t.at(y, x, c), 0.0, 1.0);
                rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x * 3 + c)] =
                    static_cast<unsigned char>(std::lround(v * 255.0));
            }
        }
        row_ptrs[static_cast<std::size_t>(y)] = rows[static_cast<std::size_t>(y)].data();
    }

    FilePtr f = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng init failed for '" + path + "'");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng init failed for '" + path + "'");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed to write PNG '" + path + "'");
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, row_ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void write_jpeg(const std::string& path, const PixelImage& img, int quality) {
    const Tensor& t = img.data;
    const int h = t.dim(0), w = t.dim(1);
    std::vector<std::vector<unsigned char>> rows(static_cast<std::size_t>(h),
                                                 std::vector<unsigned char>(static_cast<std::size_t>(w) * 3));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(t.at(y, x, c), 0.0, 1.0);
                rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x * 3 + c)] =
                    static_cast<unsigned char>(std::lround(v * 255.0));
            }

    FilePtr f = open_file(path, "wb");
    jpeg_compress_struct cinfo;
    JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_compress(&cinfo);
        throw IoError("failed to write JPEG '" + path + "'");
    }
    jpeg_create_compress(&cinfo);
    jpeg_stdio_dest(&cinfo, f.get());
    cinfo.image_width = static_cast<JDIMENSION>(w);
    cinfo.image_height = static_cast<JDIMENSION>(h);
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        JSAMPROW row = rows[cinfo.next_scanline].data();
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
}

bool looks_like_image_file(const std::string& filename) {
    auto dot = filename.find_last_of('.');
    if (dot == std::string::npos) return false;
    std::string ext = filename.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == "png" || ext == "jpg" || ext == "jpeg";
}

}  // namespace relight
