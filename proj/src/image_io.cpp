#include "flowfields/image_io.hpp"

#include <png.h>

#include <bit>
#include <cctype>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace flowfields {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw std::runtime_error("cannot open file: " + path);
  return f;
}

void png_warn_fn(png_structp, png_const_charp) {}

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  PngReader() {
    png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn_fn);
    if (png) info = png_create_info_struct(png);
    if (!png || !info) throw std::runtime_error("png: allocation failed");
  }
  ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
};

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  PngWriter() {
    png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn_fn);
    if (png) info = png_create_info_struct(png);
    if (!png || !info) throw std::runtime_error("png: allocation failed");
  }
  ~PngWriter() { png_destroy_write_struct(&png, &info); }
};

bool has_png_signature(std::FILE* f) {
  unsigned char sig[8];
  std::size_t got = std::fread(sig, 1, 8, f);
  std::rewind(f);
  return got == 8 && png_sig_cmp(sig, 0, 8) == 0;
}

Rgb8Image load_png8(const std::string& path, std::FILE* f) {
  PngReader r;
  Rgb8Image img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(r.png)))
    throw std::runtime_error(path + ": corrupt or truncated PNG");
  png_init_io(r.png, f);
  png_read_info(r.png, r.info);

  png_uint_32 w, h;
  int bit_depth, color_type;
  png_get_IHDR(r.png, r.info, &w, &h, &bit_depth, &color_type, nullptr, nullptr, nullptr);
  if (bit_depth == 16)
    throw std::runtime_error(path + ": 16-bit PNG not supported as image input");

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(r.png);
  if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
  png_set_strip_alpha(r.png);
  png_read_update_info(r.png, r.info);

  int channels = png_get_channels(r.png, r.info);
  if (channels != 1 && channels != 3)
    throw std::runtime_error(path + ": unsupported channel count");

  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  img.channels = channels;
  img.data.resize(static_cast<std::size_t>(w) * h * channels);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y)
    rows[y] = img.data.data() + static_cast<std::size_t>(y) * w * channels;
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
  return img;
}

void skip_pnm_space(std::FILE* f) {
  int c;
  while ((c = std::fgetc(f)) != EOF) {
    if (c == '#') {
      while ((c = std::fgetc(f)) != EOF && c != '\n') {}
    } else if (!std::isspace(c)) {
      std::ungetc(c, f);
      return;
    }
  }
}

int read_pnm_int(std::FILE* f, const std::string& path) {
  skip_pnm_space(f);
  int value = 0;
  int c = std::fgetc(f);
  if (c == EOF || !std::isdigit(c)) throw std::runtime_error(path + ": malformed PNM header");
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    c = std::fgetc(f);
  }
  return value;
}

Rgb8Image load_pnm(const std::string& path, std::FILE* f) {
  char magic[2];
  if (std::fread(magic, 1, 2, f) != 2 || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6'))
    throw std::runtime_error(path + ": unsupported image format (expected PNG or binary PPM/PGM)");
  int channels = magic[1] == '6' ? 3 : 1;
  int w = read_pnm_int(f, path);
  int h = read_pnm_int(f, path);
  int maxval = read_pnm_int(f, path);
  if (w < 1 || h < 1) throw std::runtime_error(path + ": bad PNM dimensions");
  if (maxval != 255) throw std::runtime_error(path + ": only 8-bit PNM supported");
  // the integer parser already consumed the single whitespace after maxval
  Rgb8Image img;
  img.width = w;
  img.height = h;
  img.channels = channels;
  img.data.resize(static_cast<std::size_t>(w) * h * channels);
  if (std::fread(img.data.data(), 1, img.data.size(), f) != img.data.size())
    throw std::runtime_error(path + ": truncated PNM payload");
  return img;
}

}  // namespace

Rgb8Image load_rgb(const std::string& path) {
  FilePtr f = open_file(path, "rb");
  if (has_png_signature(f.get())) return load_png8(path, f.get());
  return load_pnm(path, f.get());
}

void write_png8(const std::string& path, const Rgb8Image& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("write_png8: 1 or 3 channels required");
  FilePtr f = open_file(path, "wb");
  PngWriter w;
  std::vector<png_bytep> rows(img.height);
  if (setjmp(png_jmpbuf(w.png))) throw std::runtime_error(path + ": PNG write failed");
  png_init_io(w.png, f.get());
  png_set_IHDR(w.png, w.info, img.width, img.height, 8,
               img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  for (int y = 0; y < img.height; ++y)
    rows[y] = const_cast<png_bytep>(img.data.data()) +
              static_cast<std::size_t>(y) * img.width * img.channels;
  png_write_image(w.png, rows.data());
  png_write_end(w.png, nullptr);
}

Image16 load_png16(const std::string& path) {
  FilePtr f = open_file(path, "rb");
  if (!has_png_signature(f.get())) throw std::runtime_error(path + ": not a PNG file");
  PngReader r;
  Image16 img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(r.png)))
    throw std::runtime_error(path + ": corrupt or truncated PNG");
  png_init_io(r.png, f.get());
  png_read_info(r.png, r.info);

  png_uint_32 w, h;
  int bit_depth, color_type;
  png_get_IHDR(r.png, r.info, &w, &h, &bit_depth, &color_type, nullptr, nullptr, nullptr);
  if (bit_depth != 16) throw std::runtime_error(path + ": expected a 16-bit PNG");
  png_set_strip_alpha(r.png);
  if constexpr (std::endian::native == std::endian::little) png_set_swap(r.png);
  png_read_update_info(r.png, r.info);

  int channels = png_get_channels(r.png, r.info);
  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  img.channels = channels;
  img.data.resize(static_cast<std::size_t>(w) * h * channels);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y)
    rows[y] = reinterpret_cast<png_bytep>(img.data.data() +
                                          static_cast<std::size_t>(y) * w * channels);
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
  return img;
}

void write_png16(const std::string& path, const Image16& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("write_png16: 1 or 3 channels required");
  FilePtr f = open_file(path, "wb");
  PngWriter w;
  std::vector<png_bytep> rows(img.height);
  if (setjmp(png_jmpbuf(w.png))) throw std::runtime_error(path + ": PNG write failed");
  png_init_io(w.png, f.get());
  png_set_IHDR(w.png, w.info, img.width, img.height, 16,
               img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  if constexpr (std::endian::native == std::endian::little) png_set_swap(w.png);
  for (int y = 0; y < img.height; ++y)
    rows[y] = reinterpret_cast<png_bytep>(const_cast<std::uint16_t*>(img.data.data()) +
                                          static_cast<std::size_t>(y) * img.width * img.channels);
  png_write_image(w.png, rows.data());
  png_write_end(w.png, nullptr);
}

}  // namespace flowfields
