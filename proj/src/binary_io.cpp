#include "roer/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "roer/errors.hpp"

namespace roer {

namespace {

constexpr std::uint8_t kMagic[4] = {'R', 'O', 'E', 'R'};
constexpr std::size_t kHeaderSize = 16;

}  // namespace

void ByteWriter::u16(std::uint16_t v) {
  for (int i = 0; i < 2; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::f64s(std::span<const double> v) {
  for (double x : v) f64(x);
}

void ByteReader::need(std::size_t n) const {
  if (bytes_.size() - pos_ < n) {
    throw FormatError("truncated stream: need " + std::to_string(n) + " bytes at offset " +
                      std::to_string(pos_) + ", have " + std::to_string(bytes_.size() - pos_));
  }
}

std::uint8_t ByteReader::u8() {
  need(1);
  return bytes_[pos_++];
}

std::uint16_t ByteReader::u16() {
  need(2);
  std::uint16_t v = 0;
  for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(bytes_[pos_++]) << (8 * i);
  return v;
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

void ByteReader::f64s(std::span<double> out) {
  need(out.size() * 8);
  for (double& x : out) x = f64();
}

std::span<const std::uint8_t> ByteReader::raw(std::size_t n) {
  need(n);
  auto view = bytes_.subspan(pos_, n);
  pos_ += n;
  return view;
}

std::vector<std::uint8_t> wrap_envelope(EnvelopeKind kind, std::uint16_t version,
                                        std::span<const std::uint8_t> payload) {
  ByteWriter w;
  w.raw(kMagic);
  w.u16(static_cast<std::uint16_t>(kind));
  w.u16(version);
  w.u64(payload.size());
  w.raw(payload);
  return w.take();
}

std::span<const std::uint8_t> open_envelope(std::span<const std::uint8_t> bytes, EnvelopeKind kind,
                                            std::uint16_t version) {
  if (bytes.size() < kHeaderSize) throw FormatError("truncated stream: missing envelope header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic bytes");
  ByteReader r(bytes.subspan(4));
  const auto got_kind = r.u16();
  const auto got_version = r.u16();
  const auto length = r.u64();
  if (got_kind != static_cast<std::uint16_t>(kind)) {
    throw FormatError("envelope kind " + std::to_string(got_kind) + ", expected " +
                      std::to_string(static_cast<std::uint16_t>(kind)));
  }
  if (got_version != version) {
    throw FormatError("version mismatch: stream has " + std::to_string(got_version) + ", reader supports " +
                      std::to_string(version));
  }
  if (bytes.size() - kHeaderSize < length) throw FormatError("truncated stream: payload shorter than header length");
  if (bytes.size() - kHeaderSize > length) throw FormatError("trailing bytes after payload");
  return bytes.subspan(kHeaderSize, length);
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path);
}

}  // namespace roer
