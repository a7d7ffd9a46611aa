#include "umd/imageio.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

#include "umd/sampler.hpp"

namespace umd {
namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

[[noreturn]] void fail(const std::string& what, const std::string& path) {
  throw ContractViolation(what + ": " + path);
}

void write_rows(const std::string& path, int h, int w, int channels, int depth,
                const std::vector<png_byte>& rowdata) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail("cannot open for writing", path);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail("libpng init failed", path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail("png write error", path);
  }
  png_init_io(png, fp.get());
  int color = channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
  png_set_IHDR(png, info, png_uint_32(w), png_uint_32(h), depth, color,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  size_t stride = size_t(w) * size_t(channels) * size_t(depth / 8);
  std::vector<png_bytep> rows(size_t(h), nullptr);
  for (int y = 0; y < h; ++y)
    rows[size_t(y)] = const_cast<png_bytep>(rowdata.data() + size_t(y) * stride);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

struct Decoded {
  int h, w, channels, depth;
  std::vector<png_byte> rowdata;  // tightly packed rows
};

Decoded read_rows(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail("cannot open for reading", path);
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8))
    fail("not a png file", path);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("libpng init failed", path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("png read error", path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  // Normalize everything to 8- or 16-bit gray/RGB.
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  Decoded d;
  d.h = int(png_get_image_height(png, info));
  d.w = int(png_get_image_width(png, info));
  d.depth = int(png_get_bit_depth(png, info));
  int color = png_get_color_type(png, info);
  d.channels = color == PNG_COLOR_TYPE_RGB ? 3 : 1;
  if (color != PNG_COLOR_TYPE_RGB && color != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("unsupported png color type", path);
  }
  size_t stride = size_t(d.w) * size_t(d.channels) * size_t(d.depth / 8);
  d.rowdata.resize(size_t(d.h) * stride);
  std::vector<png_bytep> rows(size_t(d.h), nullptr);
  for (int y = 0; y < d.h; ++y)
    rows[size_t(y)] = d.rowdata.data() + size_t(y) * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return d;
}

}  // namespace

void write_png(const std::string& path, const Tensor& img) {
  UMD_REQUIRE(img.ndim() == 3 && (img.dim(2) == 1 || img.dim(2) == 3),
              "write_png: image must be H x W x {1,3}");
  UMD_REQUIRE(img.all_finite(), "write_png: image must be finite");
  int h = img.dim(0), w = img.dim(1), c = img.dim(2);
  std::vector<png_byte> rows(img.numel());
  for (size_t i = 0; i < img.numel(); ++i) {
    double v = std::min(1.0, std::max(0.0, img[i]));
    rows[i] = png_byte(std::lround(v * 255.0));
  }
  write_rows(path, h, w, c, 8, rows);
}

Tensor read_png(const std::string& path) {
  Decoded d = read_rows(path);
  if (d.depth != 8) fail("expected an 8-bit png", path);
  Tensor img({d.h, d.w, d.channels});
  for (size_t i = 0; i < img.numel(); ++i) img[i] = d.rowdata[i] / 255.0;
  return img;
}

void write_png16(const std::string& path, const Tensor& v, double scale) {
  UMD_REQUIRE(v.ndim() == 2, "write_png16: field must be H x W");
  UMD_REQUIRE(v.all_finite() && scale > 0, "write_png16: bad field or scale");
  int h = v.dim(0), w = v.dim(1);
  std::vector<png_byte> rows(v.numel() * 2);
  for (size_t i = 0; i < v.numel(); ++i) {
    double x = std::lround(v[i] * scale);
    uint16_t q = uint16_t(std::min(65535.0, std::max(0.0, x)));
    rows[2 * i] = png_byte(q >> 8);  // png is big-endian
    rows[2 * i + 1] = png_byte(q & 0xff);
  }
  write_rows(path, h, w, 1, 16, rows);
}

Tensor read_png16(const std::string& path, double scale) {
  UMD_REQUIRE(scale > 0, "read_png16: scale must be positive");
  Decoded d = read_rows(path);
  if (d.depth != 16 || d.channels != 1) fail("expected a 16-bit gray png", path);
  Tensor v({d.h, d.w});
  for (size_t i = 0; i < v.numel(); ++i) {
    uint16_t q = uint16_t((d.rowdata[2 * i] << 8) | d.rowdata[2 * i + 1]);
    v[i] = q / scale;
  }
  return v;
}

Tensor colormap(const Tensor& v) {
  UMD_REQUIRE(v.ndim() == 2, "colormap: field must be H x W");
  UMD_REQUIRE(v.all_finite(), "colormap: field must be finite");
  double lo = v.min_value(), hi = v.max_value();
  double span = hi > lo ? hi - lo : 1.0;
  Tensor rgb({v.dim(0), v.dim(1), 3});
  // Anchors low -> high: dark blue, teal, green, yellow.
  static const double anchor[4][3] = {{0.05, 0.03, 0.35},
                                      {0.05, 0.45, 0.55},
                                      {0.15, 0.70, 0.25},
                                      {0.95, 0.90, 0.10}};
  for (size_t i = 0; i < v.numel(); ++i) {
    double t = (v[i] - lo) / span * 3.0;
    int k = std::min(2, int(t));
    double f = t - k;
    for (int c = 0; c < 3; ++c)
      rgb[i * 3 + size_t(c)] =
          anchor[k][c] + f * (anchor[k + 1][c] - anchor[k][c]);
  }
  return rgb;
}

Tensor resize_image(const Tensor& img, int out_h, int out_w) {
  UMD_REQUIRE(img.ndim() == 3, "resize_image: image must be H x W x C");
  UMD_REQUIRE(out_h > 0 && out_w > 0, "resize_image: bad output size");
  if (img.dim(0) == out_h && img.dim(1) == out_w) return img;
  double sy = double(img.dim(0)) / out_h, sx = double(img.dim(1)) / out_w;
  Tensor coords({out_h, out_w, 2});
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      coords.at(y, x, 0) = (x + 0.5) * sx - 0.5;
      coords.at(y, x, 1) = (y + 0.5) * sy - 0.5;
    }
  return sample_image(img, coords).image;
}

}  // namespace umd
