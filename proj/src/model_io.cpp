#include "disco/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include <zlib.h>

#include "disco/error.hpp"

namespace disco {

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::raw(std::span<const std::uint8_t> bytes) {
  bytes_.insert(bytes_.end(), bytes.begin(), bytes.end());
}

std::uint32_t ByteReader::u32() {
  const auto b = raw(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

std::span<const std::uint8_t> ByteReader::raw(std::size_t n) {
  if (remaining() < n) throw Error(ErrorKind::ChecksumMismatch, "file truncated");
  auto out = bytes_.subspan(offset_, n);
  offset_ += n;
  return out;
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode_layers(std::span<const DenseLayer> layers) {
  ByteWriter w;
  w.raw(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>("DSCW"), 4));
  w.u32(kWeightsVersion);
  w.u32(static_cast<std::uint32_t>(layers.size()));
  for (const auto& layer : layers) {
    w.u32(static_cast<std::uint32_t>(layer.in_dim()));
    w.u32(static_cast<std::uint32_t>(layer.out_dim()));
  }
  for (const auto& layer : layers) {
    for (double v : layer.weight.values()) w.f32(static_cast<float>(v));
    for (double v : layer.bias.values()) w.f32(static_cast<float>(v));
  }
  const std::uint32_t crc = crc32_of(w.bytes());
  w.u32(crc);
  return std::move(w.bytes());
}

std::vector<DenseLayer> decode_layers(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "DSCW", 4) != 0)
    throw Error(ErrorKind::BadMagic, "not a weights file");
  ByteReader r(bytes);
  r.raw(4);
  const std::uint32_t version = r.u32();
  if (version != kWeightsVersion)
    throw Error(ErrorKind::VersionMismatch, "weights version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  std::vector<std::pair<std::uint32_t, std::uint32_t>> dims;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto in = r.u32();
    const auto out = r.u32();
    dims.emplace_back(in, out);
  }
  std::size_t floats = 0;
  for (auto [in, out] : dims) floats += static_cast<std::size_t>(in) * out + out;
  if (r.remaining() != floats * 4 + 4)
    throw Error(ErrorKind::ChecksumMismatch, "payload size does not match layer table");
  const std::size_t payload_end = bytes.size() - 4;
  ByteReader tail(bytes.subspan(payload_end));
  if (tail.u32() != crc32_of(bytes.first(payload_end)))
    throw Error(ErrorKind::ChecksumMismatch, "CRC32 mismatch");
  std::vector<DenseLayer> layers;
  for (auto [in, out] : dims) {
    DenseLayer layer{Matrix(out, in), Matrix(1, out)};
    for (auto& v : layer.weight.values()) v = r.f32();
    for (auto& v : layer.bias.values()) v = r.f32();
    layers.push_back(std::move(layer));
  }
  return layers;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

void save_model(const ObjectFieldModel& model, const std::filesystem::path& path) {
  write_file(path, encode_layers(model.layers()));
}

void save_model(const BackgroundFieldModel& model, const std::filesystem::path& path) {
  write_file(path, encode_layers(model.layers()));
}

ObjectFieldModel load_object_model(const std::filesystem::path& path) {
  return ObjectFieldModel::from_layers(decode_layers(read_file(path)));
}

BackgroundFieldModel load_background_model(const std::filesystem::path& path, int input_dims) {
  return BackgroundFieldModel::from_layers(decode_layers(read_file(path)), input_dims);
}

}  // namespace disco
