#include "mitonet/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "mitonet/errors.hpp"

namespace mitonet {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void on_png_error(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

}  // namespace

Patch read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw MissingFile("cannot open " + path.string());

  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw DecodeError(path.string() + ": not a PNG file");
  }

  std::string error;
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, on_png_error, on_png_warning);
  if (!png) throw DecodeError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DecodeError("png_create_info_struct failed");
  }

  // Anything allocated after setjmp must be owned by objects declared before
  // it, since longjmp skips destructors.
  std::vector<std::uint8_t> pixels;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int color_type = 0;
  int bit_depth = 0;
  bool unsupported = false;
  std::string unsupported_why;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DecodeError(path.string() + ": " + (error.empty() ? "decode failed" : error));
  }

  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  png_get_IHDR(png, info, &width, &height, &bit_depth, &color_type, nullptr, nullptr, nullptr);

  if (bit_depth == 16) {
    unsupported = true;
    unsupported_why = "16-bit samples";
  } else if ((color_type & PNG_COLOR_MASK_ALPHA) != 0 || png_get_valid(png, info, PNG_INFO_tRNS)) {
    unsupported = true;
    unsupported_why = "alpha channel";
  }

  if (!unsupported) {
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY) {
      if (bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
      png_set_gray_to_rgb(png);
    }
    png_read_update_info(png, info);
    if (png_get_rowbytes(png, info) != static_cast<std::size_t>(width) * 3) {
      unsupported = true;
      unsupported_why = "unexpected row layout";
    }
  }

  if (!unsupported) {
    pixels.resize(static_cast<std::size_t>(width) * height * 3);
    rows.resize(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + y * width * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);

  if (unsupported) throw UnsupportedFormat(path.string() + ": " + unsupported_why);
  return Patch(static_cast<int>(width), static_cast<int>(height), std::move(pixels));
}

void write_png(const std::filesystem::path& path, const Patch& patch) {
  validate(patch);
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot write " + path.string());

  std::string error;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, on_png_error, on_png_warning);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  std::vector<png_bytep> rows(patch.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path.string() + ": " + (error.empty() ? "encode failed" : error));
  }

  png_init_io(png, file.get());
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, patch.width, patch.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < patch.height; ++y) {
    rows[y] = const_cast<png_bytep>(patch.data.data() + static_cast<std::size_t>(y) * patch.width * 3);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace mitonet
