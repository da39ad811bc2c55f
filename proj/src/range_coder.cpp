// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#include "lhbvc/range_coder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lhbvc {

namespace {

constexpr std::uint64_t kTop = 1ull << 32;
constexpr std::uint64_t kBottom = 1ull << 24;
// The decoder reads 4 bytes ahead of the encoder's output; more than that
// means the stream was cut short.
constexpr std::size_t kMaxOverread = 4;

}  // namespace

CdfTable build_cdf_table(std::span<const double> probabilities) {
  const std::size_t n = probabilities.size();
  if (n == 0) throw std::invalid_argument("build_cdf_table: empty alphabet");
  if (n > kCdfTotal) throw std::invalid_argument("build_cdf_table: alphabet exceeds 2^16 symbols");
  double total = 0.0;
  for (double p : probabilities) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw std::invalid_argument("build_cdf_table: invalid probability");
    total += p;
  }
  std::vector<std::uint32_t> freq(n);
  const double spare = static_cast<double>(kCdfTotal - n);
  std::uint64_t assigned = 0;
  std::size_t argmax = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = total > 0.0 ? probabilities[i] / total : 1.0 / static_cast<double>(n);
    freq[i] = 1 + static_cast<std::uint32_t>(std::floor(p * spare));
    assigned += freq[i];
    if (probabilities[i] > probabilities[argmax]) argmax = i;
  }
  // floor() keeps assigned <= total; guard against p summing slightly above 1.
  while (assigned > kCdfTotal) {
    auto it = std::max_element(freq.begin(), freq.end());
    --*it;
    --assigned;
  }
  freq[argmax] += static_cast<std::uint32_t>(kCdfTotal - assigned);
  CdfTable t;
  t.cdf.resize(n + 1);
  t.cdf[0] = 0;
  for (std::size_t i = 0; i < n; ++i) t.cdf[i + 1] = t.cdf[i] + freq[i];
  return t;
}

// --- encoder -----------------------------------------------------------------

void RangeEncoder::propagate_carry() {
  for (auto it = out_.rbegin(); it != out_.rend(); ++it) {
    if (++*it != 0) return;
  }
  // The interval never leaves [0, 1), so a carry cannot pass the first byte.
  throw std::logic_error("RangeEncoder: carry past start of stream");
}

void RangeEncoder::encode_range(std::uint32_t start, std::uint32_t freq) {
  const std::uint64_t r = range_ >> kCdfBits;
  low_ += r * start;
  // The top symbol absorbs the truncation remainder.
  range_ = (start + freq == kCdfTotal) ? range_ - r * start : r * freq;
  if (low_ >= kTop) {
    low_ -= kTop;
    propagate_carry();
  }
  while (range_ < kBottom) {
    out_.push_back(static_cast<std::uint8_t>(low_ >> 24));
    low_ = (low_ << 8) & (kTop - 1);
    range_ <<= 8;
  }
}

void RangeEncoder::encode(const CdfTable& table, std::size_t symbol) {
  if (symbol >= table.size()) {
    throw std::out_of_range("RangeEncoder: symbol " + std::to_string(symbol) + " outside table of " +
                            std::to_string(table.size()));
  }
  encode_range(table.cdf[symbol], table.cdf[symbol + 1] - table.cdf[symbol]);
}

void RangeEncoder::encode_raw16(std::uint32_t value) {
  if (value >= kCdfTotal) throw std::out_of_range("RangeEncoder: raw value exceeds 16 bits");
  encode_range(value, 1);
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  // Emit the shortest V in [low, low + range) whose remaining bytes are zero;
  // the decoder supplies those zeros itself.
  for (int k = 0; k <= 4; ++k) {
    const std::uint64_t unit = 1ull << (32 - 8 * k);
    const std::uint64_t v = (low_ + unit - 1) & ~(unit - 1);
    if (v < low_ + range_) {
      std::uint64_t value = v;
      if (value >= kTop) {
        value -= kTop;
        propagate_carry();
      }
      for (int i = 0; i < k; ++i) out_.push_back(static_cast<std::uint8_t>(value >> (24 - 8 * i)));
      break;
    }
  }
  std::vector<std::uint8_t> result = std::move(out_);
  *this = RangeEncoder();
  return result;
}

// --- decoder -----------------------------------------------------------------

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> bytes) : bytes_(bytes) {
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() {
  const std::size_t p = pos_++;
  if (p < bytes_.size()) return bytes_[p];
  if (p >= bytes_.size() + kMaxOverread) throw DecodeError("range decoder: stream truncated", bytes_.size());
  return 0;
}

std::uint32_t RangeDecoder::target(std::uint64_t r) const {
  const std::uint64_t v = code_ / r;
  return static_cast<std::uint32_t>(std::min<std::uint64_t>(v, kCdfTotal - 1));
}

void RangeDecoder::consume(std::uint64_t r, std::uint32_t start, std::uint32_t freq, bool last) {
  code_ -= r * start;
  range_ = last ? range_ - r * start : r * freq;
  if (code_ >= range_) throw DecodeError("range decoder: corrupt stream", std::min(pos_, bytes_.size()));
  while (range_ < kBottom) {
    code_ = ((code_ << 8) | next_byte()) & (kTop - 1);
    range_ <<= 8;
  }
}

std::size_t RangeDecoder::decode(const CdfTable& table) {
  if (table.size() == 0) throw std::invalid_argument("RangeDecoder: empty table");
  const std::uint64_t r = range_ >> kCdfBits;
  const std::uint32_t t = target(r);
  // Largest s with cdf[s] <= t.
  const auto it = std::upper_bound(table.cdf.begin(), table.cdf.end(), t);
  const auto s = static_cast<std::size_t>(it - table.cdf.begin()) - 1;
  const std::uint32_t start = table.cdf[s], freq = table.cdf[s + 1] - start;
  consume(r, start, freq, start + freq == kCdfTotal);
  return s;
}

std::uint32_t RangeDecoder::decode_raw16() {
  const std::uint64_t r = range_ >> kCdfBits;
  const std::uint32_t t = target(r);
  consume(r, t, 1, t + 1 == kCdfTotal);
  return t;
}

void RangeDecoder::finish() const {
  // A well-formed stream is fully consumed by the 4-byte lookahead.
  if (pos_ < bytes_.size()) throw DecodeError("range decoder: trailing bytes", pos_);
}

}  // namespace lhbvc
