#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "disco/renderer.hpp"

namespace disco {

/// 8-bit quantisation used by every writer: round(clamp(v, 0, 1) * 255).
std::uint8_t quantize(double v);

std::vector<std::uint8_t> encode_png(const Image& image);
/// Decodes an 8-bit RGB or RGBA PNG (alpha is kept when present).
Image decode_png(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_ppm(const Image& image);

/// "DSCF" | u32 S | S*S*4 f32 RGBA, row-major, little-endian. Alpha is 1
/// when the image has no alpha plane.
std::vector<std::uint8_t> encode_raw(const Image& image);
Image decode_raw(const std::vector<std::uint8_t>& bytes);

/// Picks the encoder from the extension (.png, .ppm, .dscf). Throws Io.
void write_image(const std::filesystem::path& path, const Image& image);
Image read_image(const std::filesystem::path& path);

/// Greyscale image of a transmittance plane (for component dumps).
Image transmittance_image(int size, const std::vector<double>& transmittance);

}  // namespace disco
