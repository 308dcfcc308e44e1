#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "disco/fields.hpp"

namespace disco {

/// Weights file layout (little-endian):
///   "DSCW" | u32 version | u32 layer count | (u32 in, u32 out) per layer |
///   f32 weights (out x in, row-major) then f32 biases, layer by layer |
///   u32 CRC32 of every preceding byte.
inline constexpr std::uint32_t kWeightsVersion = 1;

std::vector<std::uint8_t> encode_layers(std::span<const DenseLayer> layers);
/// Throws BadMagic, VersionMismatch, ChecksumMismatch (including truncation).
std::vector<DenseLayer> decode_layers(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

void save_model(const ObjectFieldModel& model, const std::filesystem::path& path);
void save_model(const BackgroundFieldModel& model, const std::filesystem::path& path);
ObjectFieldModel load_object_model(const std::filesystem::path& path);
BackgroundFieldModel load_background_model(const std::filesystem::path& path, int input_dims);

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

/// Little-endian helpers shared by the binary formats.
class ByteWriter {
 public:
  void u32(std::uint32_t v);
  void f32(float v);
  void raw(std::span<const std::uint8_t> bytes);
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  /// Each read throws ChecksumMismatch when the buffer is exhausted.
  std::uint32_t u32();
  float f32();
  std::span<const std::uint8_t> raw(std::size_t n);
  std::size_t offset() const { return offset_; }
  std::size_t remaining() const { return bytes_.size() - offset_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t offset_ = 0;
};

}  // namespace disco
