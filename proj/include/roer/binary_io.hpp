#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace roer {

// Versioned little-endian envelope shared by buffer snapshots, parameter
// checkpoints and agent checkpoints.
//
//   offset  size  field
//   0       4     magic "ROER"
//   4       2     payload kind (EnvelopeKind)
//   6       2     payload format version
//   8       8     payload length in bytes (u64)
//   16      n     payload
enum class EnvelopeKind : std::uint16_t {
  kReplayBuffer = 1,
  kParameters = 2,
  kSacAgent = 3,
  kTabularAgent = 4,
};

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void f64s(std::span<const double> v);
  void raw(std::span<const std::uint8_t> v) { bytes_.insert(bytes_.end(), v.begin(), v.end()); }

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

// Reads fail with FormatError on truncation.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  void f64s(std::span<double> out);
  std::span<const std::uint8_t> raw(std::size_t n);

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const;

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> wrap_envelope(EnvelopeKind kind, std::uint16_t version,
                                        std::span<const std::uint8_t> payload);

// Validates magic, kind, version and length; returns the payload view.
std::span<const std::uint8_t> open_envelope(std::span<const std::uint8_t> bytes, EnvelopeKind kind,
                                            std::uint16_t version);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace roer
