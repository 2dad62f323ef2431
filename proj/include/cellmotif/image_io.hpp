#pragma once

// Grayscale image files: 8/16-bit PNG, 8/16/32-bit TIFF, and a raw float dump
// (uint32 LE width, uint32 LE height, then width*height float32 LE, row-major).

#include <png.h>
#include <tiffio.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "cellmotif/errors.hpp"
#include "cellmotif/image.hpp"

namespace cellmotif {

enum class ImageFormat { kPng, kTiff, kRaw };

inline ImageFormat format_from_path(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return ImageFormat::kPng;
  if (ext == ".tif" || ext == ".tiff") return ImageFormat::kTiff;
  if (ext == ".raw" || ext == ".f32" || ext == ".bin") return ImageFormat::kRaw;
  throw IoError("unrecognised image extension '" + ext + "' for " + path.string());
}

namespace detail {

inline std::uint32_t read_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void write_u32_le(unsigned char* p, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) p[k] = static_cast<unsigned char>((v >> (8 * k)) & 0xffu);
}

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline Image read_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::array<unsigned char, 8> header{};
  if (!in.read(reinterpret_cast<char*>(header.data()), header.size()))
    throw IoError("truncated raw header in " + path.string());
  const std::uint32_t w = read_u32_le(header.data());
  const std::uint32_t h = read_u32_le(header.data() + 4);
  if (w == 0 || h == 0 || w > (1u << 16) || h > (1u << 16))
    throw IoError("implausible raw dimensions in " + path.string());
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * 4);
  if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size())))
    throw IoError("truncated raw payload in " + path.string());
  std::vector<double> px(static_cast<std::size_t>(w) * h);
  for (std::size_t k = 0; k < px.size(); ++k) {
    const std::uint32_t bits = read_u32_le(bytes.data() + 4 * k);
    px[k] = static_cast<double>(std::bit_cast<float>(bits));
    if (!std::isfinite(px[k])) throw IoError("non-finite value in " + path.string());
  }
  return Image(static_cast<int>(w), static_cast<int>(h), std::move(px));
}

inline void write_raw(const Image& img, const std::filesystem::path& path) {
  std::vector<unsigned char> bytes(8 + img.size() * 4);
  write_u32_le(bytes.data(), static_cast<std::uint32_t>(img.width()));
  write_u32_le(bytes.data() + 4, static_cast<std::uint32_t>(img.height()));
  const auto px = img.pixels();
  for (std::size_t k = 0; k < px.size(); ++k)
    write_u32_le(bytes.data() + 8 + 4 * k, std::bit_cast<std::uint32_t>(static_cast<float>(px[k])));
  std::ofstream out(path, std::ios::binary);
  if (!out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size())))
    throw IoError("cannot write " + path.string());
}

inline Image read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }
  std::vector<double> px;
  std::vector<unsigned char> buf;
  std::vector<png_bytep> rows;
  png_uint_32 w = 0, h = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("failed to decode PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  w = png_get_image_width(png, info);
  h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
      color == PNG_COLOR_TYPE_PALETTE)
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  if (depth == 16) png_set_swap(png);  // little-endian host order for 16-bit samples
  png_read_update_info(png, info);
  depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buf.assign(rowbytes * h, 0);
  rows.assign(h, nullptr);
  for (png_uint_32 j = 0; j < h; ++j) rows[j] = buf.data() + j * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  px.resize(static_cast<std::size_t>(w) * h);
  for (png_uint_32 j = 0; j < h; ++j) {
    for (png_uint_32 i = 0; i < w; ++i) {
      const std::size_t k = static_cast<std::size_t>(j) * w + i;
      if (depth == 16) {
        std::uint16_t v;
        std::memcpy(&v, rows[j] + 2 * i, 2);
        px[k] = v;
      } else {
        px[k] = rows[j][i];
      }
    }
  }
  return Image(static_cast<int>(w), static_cast<int>(h), std::move(px));
}

// 16-bit grayscale; intensities are min-max scaled onto the full range.
inline void write_png(const Image& img, const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  const auto [lo, hi] = img.min_max();
  const double range = hi > lo ? hi - lo : 1.0;
  std::vector<unsigned char> buf(img.size() * 2);
  for (int j = 0; j < img.height(); ++j)
    for (int i = 0; i < img.width(); ++i) {
      const double t = std::clamp((img(i, j) - lo) / range, 0.0, 1.0);
      const auto v = static_cast<std::uint16_t>(std::lround(t * 65535.0));
      const std::size_t k = 2 * (static_cast<std::size_t>(j) * img.width() + i);
      buf[k] = static_cast<unsigned char>(v >> 8);  // PNG is big-endian
      buf[k + 1] = static_cast<unsigned char>(v & 0xff);
    }
  std::vector<png_bytep> rows(img.height());
  for (int j = 0; j < img.height(); ++j)
    rows[j] = buf.data() + static_cast<std::size_t>(j) * img.width() * 2;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed to encode PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width(), img.height(), 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

struct TiffCloser {
  void operator()(TIFF* t) const noexcept {
    if (t) TIFFClose(t);
  }
};

inline Image read_tiff(const std::filesystem::path& path) {
  TIFFSetWarningHandler(nullptr);
  std::unique_ptr<TIFF, TiffCloser> tif(TIFFOpen(path.string().c_str(), "r"));
  if (!tif) throw IoError("cannot open TIFF " + path.string());
  std::uint32_t w = 0, h = 0;
  std::uint16_t bits = 8, spp = 1, format = SAMPLEFORMAT_UINT;
  TIFFGetField(tif.get(), TIFFTAG_IMAGEWIDTH, &w);
  TIFFGetField(tif.get(), TIFFTAG_IMAGELENGTH, &h);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_BITSPERSAMPLE, &bits);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLESPERPIXEL, &spp);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLEFORMAT, &format);
  if (spp != 1) throw IoError("only single-channel TIFF is supported: " + path.string());
  if (!(bits == 8 || bits == 16 || (bits == 32 && format == SAMPLEFORMAT_IEEEFP)))
    throw IoError("unsupported TIFF sample layout in " + path.string());
  std::vector<unsigned char> line(TIFFScanlineSize(tif.get()));
  std::vector<double> px(static_cast<std::size_t>(w) * h);
  for (std::uint32_t j = 0; j < h; ++j) {
    if (TIFFReadScanline(tif.get(), line.data(), j) < 0)
      throw IoError("failed to read TIFF row in " + path.string());
    for (std::uint32_t i = 0; i < w; ++i) {
      double v = 0.0;
      if (bits == 8) {
        v = line[i];
      } else if (bits == 16) {
        std::uint16_t s;
        std::memcpy(&s, line.data() + 2 * i, 2);
        v = s;
      } else {
        float f;
        std::memcpy(&f, line.data() + 4 * i, 4);
        v = f;
      }
      px[static_cast<std::size_t>(j) * w + i] = v;
    }
  }
  return Image(static_cast<int>(w), static_cast<int>(h), std::move(px));
}

// 32-bit float TIFF, values written unscaled.
inline void write_tiff(const Image& img, const std::filesystem::path& path) {
  std::unique_ptr<TIFF, TiffCloser> tif(TIFFOpen(path.string().c_str(), "w"));
  if (!tif) throw IoError("cannot write TIFF " + path.string());
  TIFFSetField(tif.get(), TIFFTAG_IMAGEWIDTH, static_cast<std::uint32_t>(img.width()));
  TIFFSetField(tif.get(), TIFFTAG_IMAGELENGTH, static_cast<std::uint32_t>(img.height()));
  TIFFSetField(tif.get(), TIFFTAG_SAMPLESPERPIXEL, 1);
  TIFFSetField(tif.get(), TIFFTAG_BITSPERSAMPLE, 32);
  TIFFSetField(tif.get(), TIFFTAG_SAMPLEFORMAT, SAMPLEFORMAT_IEEEFP);
  TIFFSetField(tif.get(), TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_MINISBLACK);
  TIFFSetField(tif.get(), TIFFTAG_PLANARCONFIG, PLANARCONFIG_CONTIG);
  TIFFSetField(tif.get(), TIFFTAG_ROWSPERSTRIP, 1);
  std::vector<float> line(img.width());
  for (int j = 0; j < img.height(); ++j) {
    for (int i = 0; i < img.width(); ++i) line[i] = static_cast<float>(img(i, j));
    if (TIFFWriteScanline(tif.get(), line.data(), static_cast<std::uint32_t>(j), 0) < 0)
      throw IoError("failed to write TIFF row in " + path.string());
  }
}

}  // namespace detail

/// Loads an image. With `normalize`, intensities are min-max mapped onto [0, 1].
inline Image load_image(const std::filesystem::path& path, bool normalize = true) {
  Image img;
  switch (format_from_path(path)) {
    case ImageFormat::kPng: img = detail::read_png(path); break;
    case ImageFormat::kTiff: img = detail::read_tiff(path); break;
    case ImageFormat::kRaw: img = detail::read_raw(path); break;
  }
  if (normalize) normalize_min_max(img);
  return img;
}

inline void save_image(const Image& img, const std::filesystem::path& path) {
  switch (format_from_path(path)) {
    case ImageFormat::kPng: detail::write_png(img, path); break;
    case ImageFormat::kTiff: detail::write_tiff(img, path); break;
    case ImageFormat::kRaw: detail::write_raw(img, path); break;
  }
}

}  // namespace cellmotif
