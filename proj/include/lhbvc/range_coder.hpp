// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace lhbvc {

/// Coder precision: every table sums to 2^kCdfBits.
inline constexpr int kCdfBits = 16;
inline constexpr std::uint32_t kCdfTotal = 1u << kCdfBits;

/// Integer cumulative frequencies: cdf[0] == 0, cdf.back() == kCdfTotal,
/// strictly increasing. Symbol s occupies [cdf[s], cdf[s+1]).
struct CdfTable {
  std::vector<std::uint32_t> cdf;

  std::size_t size() const { return cdf.empty() ? 0 : cdf.size() - 1; }
  bool operator==(const CdfTable&) const = default;
};

/// Quantizes a probability vector. Each symbol gets 1 + floor(p * (2^16 - n))
/// and the rounding remainder goes to the most probable symbol, so every
/// symbol stays codable. Throws std::invalid_argument for an empty vector,
/// more than 2^16 symbols, or negative/non-finite entries.
CdfTable build_cdf_table(std::span<const double> probabilities);

/// Raised for malformed streams; `offset` is the byte position that failed.
class DecodeError : public std::runtime_error {
 public:
  DecodeError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " at byte " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Carry-propagating range encoder: 32-bit interval held in 64-bit registers,
/// byte-wise renormalization.
class RangeEncoder {
 public:
  void encode(const CdfTable& table, std::size_t symbol);
  /// A value in [0, 2^16) with a flat distribution.
  void encode_raw16(std::uint32_t value);
  /// Terminates the stream and returns the bytes. The encoder is reset.
  std::vector<std::uint8_t> finish();

 private:
  void encode_range(std::uint32_t start, std::uint32_t freq);
  void propagate_carry();

  std::uint64_t low_ = 0;
  std::uint64_t range_ = 0xFFFFFFFFu;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const std::uint8_t> bytes);

  std::size_t decode(const CdfTable& table);
  std::uint32_t decode_raw16();
  /// Throws DecodeError if the stream holds bytes the encoder never produced.
  void finish() const;

 private:
  std::uint32_t target(std::uint64_t r) const;
  void consume(std::uint64_t r, std::uint32_t start, std::uint32_t freq, bool last);
  std::uint8_t next_byte();

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::uint64_t code_ = 0;
  std::uint64_t range_ = 0xFFFFFFFFu;
};

}  // namespace lhbvc
