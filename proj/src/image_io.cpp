#include "disco/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <string>

#include "disco/error.hpp"
#include "disco/model_io.hpp"

namespace disco {
namespace {

void png_write_to_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

void png_error_throw(png_structp, png_const_charp msg) {
  throw Error(ErrorKind::Io, std::string("png: ") + msg);
}

void png_warning_ignore(png_structp, png_const_charp) {}

struct ReadCursor {
  const std::vector<std::uint8_t>* bytes;
  std::size_t offset;
};

void png_read_from_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->offset + length > cur->bytes->size()) png_error(png, "truncated stream");
  std::memcpy(data, cur->bytes->data() + cur->offset, length);
  cur->offset += length;
}

}  // namespace

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  std::vector<std::uint8_t> out;
  const bool has_alpha = !image.alpha.empty();
  const int channels = has_alpha ? 4 : 3;
  const auto s = static_cast<std::size_t>(image.size);
  std::vector<std::uint8_t> pixels(s * s * channels);
  for (std::size_t p = 0; p < s * s; ++p) {
    for (int c = 0; c < 3; ++c) pixels[p * channels + c] = quantize(image.rgb[p * 3 + c]);
    if (has_alpha) pixels[p * channels + 3] = quantize(image.alpha[p]);
  }
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_throw, png_warning_ignore);
  png_infop info = png_create_info_struct(png);
  try {
    png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
    png_set_IHDR(png, info, image.size, image.size, 8,
                 has_alpha ? PNG_COLOR_TYPE_RGBA : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t v = 0; v < s; ++v) png_write_row(png, pixels.data() + v * s * channels);
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

Image decode_png(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
    throw Error(ErrorKind::BadMagic, "not a PNG stream");
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_throw, png_warning_ignore);
  png_infop info = png_create_info_struct(png);
  ReadCursor cursor{&bytes, 0};
  Image img;
  try {
    png_set_read_fn(png, &cursor, png_read_from_vector);
    png_read_info(png, info);
    const auto w = png_get_image_width(png, info);
    const auto h = png_get_image_height(png, info);
    const auto type = png_get_color_type(png, info);
    if (w != h) throw Error(ErrorKind::DimensionMismatch, "image must be square");
    if (png_get_bit_depth(png, info) != 8 ||
        (type != PNG_COLOR_TYPE_RGB && type != PNG_COLOR_TYPE_RGBA))
      throw Error(ErrorKind::Io, "only 8-bit RGB/RGBA PNG is supported");
    const int channels = type == PNG_COLOR_TYPE_RGBA ? 4 : 3;
    img = Image::blank(static_cast<int>(w));
    if (channels == 4) img.alpha.resize(static_cast<std::size_t>(w) * w);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * channels);
    for (std::size_t v = 0; v < h; ++v) {
      png_read_row(png, row.data(), nullptr);
      for (std::size_t u = 0; u < w; ++u) {
        const std::size_t p = v * w + u;
        for (int c = 0; c < 3; ++c) img.rgb[p * 3 + c] = row[u * channels + c] / 255.0;
        if (channels == 4) img.alpha[p] = row[u * channels + 3] / 255.0;
      }
    }
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

std::vector<std::uint8_t> encode_ppm(const Image& image) {
  const std::string header =
      "P6\n" + std::to_string(image.size) + " " + std::to_string(image.size) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (double v : image.rgb) out.push_back(quantize(v));
  return out;
}

std::vector<std::uint8_t> encode_raw(const Image& image) {
  ByteWriter w;
  w.raw({reinterpret_cast<const std::uint8_t*>("DSCF"), 4});
  w.u32(static_cast<std::uint32_t>(image.size));
  const auto pixels = static_cast<std::size_t>(image.size) * image.size;
  for (std::size_t p = 0; p < pixels; ++p) {
    for (int c = 0; c < 3; ++c) w.f32(static_cast<float>(image.rgb[p * 3 + c]));
    w.f32(image.alpha.empty() ? 1.0f : static_cast<float>(image.alpha[p]));
  }
  return std::move(w.bytes());
}

Image decode_raw(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "DSCF", 4) != 0)
    throw Error(ErrorKind::BadMagic, "not a DSCF dump");
  ByteReader r(bytes);
  r.raw(4);
  const auto s = r.u32();
  const std::size_t pixels = static_cast<std::size_t>(s) * s;
  if (r.remaining() != pixels * 16) throw Error(ErrorKind::ChecksumMismatch, "DSCF size mismatch");
  Image img = Image::blank(static_cast<int>(s));
  img.alpha.resize(pixels);
  for (std::size_t p = 0; p < pixels; ++p) {
    for (int c = 0; c < 3; ++c) img.rgb[p * 3 + c] = r.f32();
    img.alpha[p] = r.f32();
  }
  return img;
}

void write_image(const std::filesystem::path& path, const Image& image) {
  const auto ext = path.extension().string();
  if (ext == ".png")
    write_file(path, encode_png(image));
  else if (ext == ".ppm")
    write_file(path, encode_ppm(image));
  else if (ext == ".dscf")
    write_file(path, encode_raw(image));
  else
    throw Error(ErrorKind::Io, "unknown image extension '" + ext + "'");
}

Image read_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const auto ext = path.extension().string();
  if (ext == ".png") return decode_png(bytes);
  if (ext == ".dscf") return decode_raw(bytes);
  throw Error(ErrorKind::Io, "cannot read image type '" + ext + "'");
}

Image transmittance_image(int size, const std::vector<double>& transmittance) {
  Image img = Image::blank(size);
  for (std::size_t p = 0; p < transmittance.size(); ++p)
    for (int c = 0; c < 3; ++c) img.rgb[p * 3 + c] = transmittance[p];
  return img;
}

}  // namespace disco
