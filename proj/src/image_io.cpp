#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>

#include "vd/depth.hpp"
#include "vd/error.hpp"

namespace vd {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  return f;
}

struct RawImage {
  int height = 0;
  int width = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint16_t> samples;  // row-major, interleaved
};

void write_png(const std::filesystem::path& path, int height, int width, int color_type,
               int bit_depth, const std::vector<std::uint16_t>& samples) {
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing '" + path.string() + "'");
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const int channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
  const std::size_t row_samples = static_cast<std::size_t>(width) * channels;
  const std::size_t bytes_per = bit_depth == 16 ? 2 : 1;
  std::vector<png_byte> row(row_samples * bytes_per);
  for (int y = 0; y < height; ++y) {
    for (std::size_t s = 0; s < row_samples; ++s) {
      const std::uint16_t v = samples[static_cast<std::size_t>(y) * row_samples + s];
      if (bit_depth == 16) {
        row[2 * s] = static_cast<png_byte>(v >> 8);  // PNG is big-endian
        row[2 * s + 1] = static_cast<png_byte>(v & 0xff);
      } else {
        row[s] = static_cast<png_byte>(v);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

RawImage read_png(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw FormatError("'" + path.string() + "' is not a PNG file");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("corrupt PNG '" + path.string() + "'");
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  RawImage img;
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.bit_depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_GRAY)
    img.channels = 1;
  else if (color == PNG_COLOR_TYPE_RGB)
    img.channels = 3;
  else
    img.channels = -1;
  if (img.channels < 0 || (img.bit_depth != 8 && img.bit_depth != 16)) {
    png_destroy_read_struct(&png, &info, nullptr);
    img.samples.clear();
    return img;  // caller reports the format mismatch
  }
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<png_byte> row(rowbytes);
  const std::size_t row_samples = static_cast<std::size_t>(img.width) * img.channels;
  img.samples.resize(row_samples * img.height);
  for (int y = 0; y < img.height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (std::size_t s = 0; s < row_samples; ++s) {
      img.samples[static_cast<std::size_t>(y) * row_samples + s] =
          img.bit_depth == 16 ? static_cast<std::uint16_t>((row[2 * s] << 8) | row[2 * s + 1])
                              : row[s];
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace

DepthMap load_depth_png(const std::filesystem::path& path) {
  RawImage img = read_png(path);
  if (img.channels != 1 || img.bit_depth != 16)
    throw FormatError("'" + path.string() + "' is not a 16-bit single-channel PNG");
  std::vector<double> meters(img.samples.size());
  for (std::size_t i = 0; i < meters.size(); ++i) meters[i] = img.samples[i] / 1000.0;
  return DepthMap(img.height, img.width, std::move(meters));
}

void save_depth_png(const DepthMap& depth, const std::filesystem::path& path) {
  std::vector<std::uint16_t> mm(depth.size());
  for (std::size_t i = 0; i < depth.size(); ++i) {
    const double q = std::round(depth[i] * 1000.0);
    if (q > 65535.0)
      throw RangeError("depth " + std::to_string(depth[i]) + " m exceeds the 16-bit mm range");
    mm[i] = static_cast<std::uint16_t>(q);
  }
  write_png(path, depth.height(), depth.width(), PNG_COLOR_TYPE_GRAY, 16, mm);
}

void save_rgb_png(const RgbImage& rgb, const std::filesystem::path& path) {
  const int h = rgb.height(), w = rgb.width();
  std::vector<std::uint16_t> px(3 * static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        px[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
            static_cast<std::uint16_t>(std::lround(rgb(c, y, x) * 255.0));
  write_png(path, h, w, PNG_COLOR_TYPE_RGB, 8, px);
}

RgbImage load_rgb_png(const std::filesystem::path& path) {
  RawImage img = read_png(path);
  if (img.channels != 3 || img.bit_depth != 8)
    throw FormatError("'" + path.string() + "' is not an 8-bit RGB PNG");
  RgbImage rgb(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        rgb.set(c, y, x, img.samples[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] / 255.0);
  return rgb;
}

void save_mask_png(const BoolGrid& mask, const std::filesystem::path& path) {
  std::vector<std::uint16_t> px(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) px[i] = mask[i] ? 255 : 0;
  write_png(path, mask.height(), mask.width(), PNG_COLOR_TYPE_GRAY, 8, px);
}

void save_pgm(std::span<const double> values, int height, int width, double lo, double hi,
              const std::filesystem::path& path) {
  if (values.size() != static_cast<std::size_t>(height) * width || !(hi > lo))
    throw ContractError("save_pgm: bad extent or range");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "'");
  out << "P5\n" << width << ' ' << height << "\n255\n";
  for (double v : values) {
    const double t = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(t * 255.0))));
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace vd
