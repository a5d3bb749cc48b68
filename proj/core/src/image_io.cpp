#include "featinv/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "featinv/error.hpp"

namespace featinv::io {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

unsigned char quantize(double v) {
  const double c = std::min(1.0, std::max(0.0, v));
  return static_cast<unsigned char>(std::lround(c * 255.0));
}

}  // namespace

void write_png(const std::string& path, const Tensor& image) {
  if (image.ndim() != 3 || (image.dim(0) != 1 && image.dim(0) != 3))
    throw_input("write_png expects a (1|3,H,W) tensor, got " +
                shape_str(image.shape()));
  const int C = image.dim(0), H = image.dim(1), W = image.dim(2);

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw_input("cannot open for writing: " + path);

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw_numeric("libpng: failed to allocate write struct");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw_numeric("libpng: failed to allocate info struct");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw_numeric("libpng: write failed for " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(W),
               static_cast<png_uint_32>(H), 8,
               C == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<unsigned char> row(static_cast<size_t>(W) * C);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < C; ++c)
        row[static_cast<size_t>(x) * C + c] = quantize(image.at(c, y, x));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw_input("cannot open: " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw_numeric("libpng: failed to allocate read struct");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw_numeric("libpng: failed to allocate info struct");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw_input("libpng: failed to decode " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  const int W = static_cast<int>(png_get_image_width(png, info));
  const int H = static_cast<int>(png_get_image_height(png, info));
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  const size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<unsigned char> raw(static_cast<size_t>(H) * rowbytes);
  std::vector<png_bytep> rows(static_cast<size_t>(H));
  for (int y = 0; y < H; ++y) rows[static_cast<size_t>(y)] = &raw[y * rowbytes];
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor out({3, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(c, y, x) =
            raw[y * rowbytes + static_cast<size_t>(x) * 3 + c] / 255.0;
  return out;
}

Tensor make_grid(const std::vector<Tensor>& images, int columns) {
  if (images.empty()) throw_input("make_grid: no images");
  const Shape s = images[0].shape();
  for (const Tensor& t : images)
    if (!shape_eq(t.shape(), s))
      throw_input("make_grid: images must share one shape");
  const int C = s[0], H = s[1], W = s[2];
  const int n = static_cast<int>(images.size());
  const int cols = std::max(1, std::min(columns, n));
  const int rows = (n + cols - 1) / cols;
  const int sep = 2;
  Tensor grid({C, rows * H + (rows - 1) * sep, cols * W + (cols - 1) * sep},
              1.0);
  for (int i = 0; i < n; ++i) {
    const int r = i / cols, q = i % cols;
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          grid.at(c, r * (H + sep) + y, q * (W + sep) + x) =
              images[static_cast<size_t>(i)].at(c, y, x);
  }
  return grid;
}

}  // namespace featinv::io
