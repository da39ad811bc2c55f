// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "lhbvc/eval.hpp"

namespace lhbvc {

std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5)); }

namespace {

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw VideoIoError("cannot open " + path.string(), 0);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw VideoIoError("cannot write " + path.string(), 0);
}

void require_frames(const std::vector<Tensor>& frames, const char* what) {
  if (frames.empty()) throw std::invalid_argument(std::string(what) + ": no frames");
  const Shape& s = frames.front().shape();
  if (s.size() != 4 || s[0] != 1 || s[1] != 3)
    throw std::invalid_argument(std::string(what) + ": frames must be [1,3,H,W], got " + shape_string(s));
  for (const Tensor& f : frames)
    if (f.shape() != s) throw std::invalid_argument(std::string(what) + ": frames differ in shape");
}

enum class Chroma { k420, k444 };

struct Y4mHeader {
  int width = 0;
  int height = 0;
  Chroma chroma = Chroma::k420;
};

std::size_t chroma_width(const Y4mHeader& h) { return h.chroma == Chroma::k444 ? h.width : (h.width + 1) / 2; }
std::size_t chroma_height(const Y4mHeader& h) { return h.chroma == Chroma::k444 ? h.height : (h.height + 1) / 2; }

// Position after the line that starts at `pos`.
std::size_t line_end(const std::vector<std::uint8_t>& b, std::size_t pos, const char* what) {
  const auto it = std::find(b.begin() + static_cast<std::ptrdiff_t>(pos), b.end(), '\n');
  if (it == b.end()) throw VideoIoError(std::string("unterminated ") + what, pos);
  return static_cast<std::size_t>(it - b.begin()) + 1;
}

Y4mHeader parse_header(const std::string& line) {
  std::istringstream ss(line);
  std::string magic, tok;
  ss >> magic;
  if (magic != "YUV4MPEG2") throw VideoIoError("not a YUV4MPEG2 file", 0);
  Y4mHeader h;
  while (ss >> tok) {
    const std::string value = tok.substr(1);
    switch (tok[0]) {
      case 'W':
        h.width = std::stoi(value);
        break;
      case 'H':
        h.height = std::stoi(value);
        break;
      case 'C':
        if (value == "420" || value == "420jpeg" || value == "420paldv" || value == "420mpeg2")
          h.chroma = Chroma::k420;
        else if (value == "444")
          h.chroma = Chroma::k444;
        else
          throw VideoIoError("unsupported colour space C" + value, 0);
        break;
      default:
        break;  // frame rate, interlacing, aspect and extensions do not affect decoding
    }
  }
  if (h.width <= 0 || h.height <= 0) throw VideoIoError("header lacks a positive W and H", 0);
  return h;
}

Tensor ycbcr_to_rgb(const std::uint8_t* y, const std::uint8_t* cb, const std::uint8_t* cr, const Y4mHeader& h) {
  const std::int64_t w = h.width, ht = h.height, plane = w * ht;
  const std::size_t cw = chroma_width(h);
  const int shift = h.chroma == Chroma::k444 ? 0 : 1;
  Tensor f({1, 3, ht, w});
  double* o = f.mutable_values().data();
  for (std::int64_t r = 0; r < ht; ++r)
    for (std::int64_t c = 0; c < w; ++c) {
      const std::size_t ci = static_cast<std::size_t>(r >> shift) * cw + static_cast<std::size_t>(c >> shift);
      const double yy = y[r * w + c], u = cb[ci] - 128.0, v = cr[ci] - 128.0;
      const std::int64_t i = r * w + c;
      o[i] = std::clamp((yy + 1.402 * v) / 255.0, 0.0, 1.0);
      o[plane + i] = std::clamp((yy - 0.344136 * u - 0.714136 * v) / 255.0, 0.0, 1.0);
      o[2 * plane + i] = std::clamp((yy + 1.772 * u) / 255.0, 0.0, 1.0);
    }
  return f;
}

std::uint8_t byte_of(double v255) { return static_cast<std::uint8_t>(std::floor(std::clamp(v255, 0.0, 255.0) + 0.5)); }

}  // namespace

Video read_y4m(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> b = slurp(path);
  std::size_t pos = line_end(b, 0, "stream header");
  const Y4mHeader h = parse_header(std::string(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(pos - 1)));
  const std::size_t luma = std::size_t(h.width) * std::size_t(h.height);
  const std::size_t chroma = chroma_width(h) * chroma_height(h);
  const std::size_t frame_bytes = luma + 2 * chroma;
  Video v{h.width, h.height, {}};
  while (pos < b.size()) {
    const std::size_t start = pos;
    static constexpr char kTag[] = "FRAME";
    if (b.size() - pos < 5 || !std::equal(kTag, kTag + 5, b.begin() + static_cast<std::ptrdiff_t>(pos)))
      throw VideoIoError("expected FRAME", pos);
    pos = line_end(b, pos, "frame header");
    if (b.size() - pos < frame_bytes)
      throw VideoIoError("truncated frame " + std::to_string(v.frames.size()) + " (" + std::to_string(b.size() - pos) +
                             " of " + std::to_string(frame_bytes) + " bytes)",
                         start);
    const std::uint8_t* y = b.data() + pos;
    v.frames.push_back(ycbcr_to_rgb(y, y + luma, y + luma + chroma, h));
    pos += frame_bytes;
  }
  return v;
}

void write_y4m(const std::filesystem::path& path, const std::vector<Tensor>& frames, int fps) {
  require_frames(frames, "write_y4m");
  const std::int64_t ht = frames[0].dim(2), w = frames[0].dim(3), plane = w * ht;
  const std::int64_t cw = (w + 1) / 2, ch = (ht + 1) / 2;
  const std::string header = "YUV4MPEG2 W" + std::to_string(w) + " H" + std::to_string(ht) + " F" +
                             std::to_string(fps) + ":1 Ip A1:1 C420jpeg\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  std::vector<double> cb(static_cast<std::size_t>(plane)), cr(static_cast<std::size_t>(plane));
  for (const Tensor& f : frames) {
    static constexpr char kTag[] = "FRAME\n";
    out.insert(out.end(), kTag, kTag + 6);
    const double* s = f.values().data();
    for (std::int64_t i = 0; i < plane; ++i) {
      const double r = std::clamp(s[i], 0.0, 1.0) * 255, g = std::clamp(s[plane + i], 0.0, 1.0) * 255,
                   bl = std::clamp(s[2 * plane + i], 0.0, 1.0) * 255;
      out.push_back(byte_of(0.299 * r + 0.587 * g + 0.114 * bl));
      cb[static_cast<std::size_t>(i)] = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * bl;
      cr[static_cast<std::size_t>(i)] = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * bl;
    }
    for (const std::vector<double>* c : {&cb, &cr})
      for (std::int64_t y = 0; y < ch; ++y)
        for (std::int64_t x = 0; x < cw; ++x) {
          double sum = 0.0;
          int n = 0;
          for (std::int64_t dy = 0; dy < 2; ++dy)
            for (std::int64_t dx = 0; dx < 2; ++dx) {
              const std::int64_t yy = 2 * y + dy, xx = 2 * x + dx;
              if (yy < ht && xx < w) {
                sum += (*c)[static_cast<std::size_t>(yy * w + xx)];
                ++n;
              }
            }
          out.push_back(byte_of(sum / n));
        }
  }
  dump(path, out);
}

Video read_raw_rgb(const std::filesystem::path& path, int width, int height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("read_raw_rgb: width and height must be positive");
  const std::vector<std::uint8_t> b = slurp(path);
  const std::size_t plane = std::size_t(width) * std::size_t(height), frame_bytes = 3 * plane;
  if (b.size() % frame_bytes != 0)
    throw VideoIoError("truncated frame " + std::to_string(b.size() / frame_bytes) + " (" +
                           std::to_string(b.size() % frame_bytes) + " of " + std::to_string(frame_bytes) + " bytes)",
                       b.size() - b.size() % frame_bytes);
  Video v{width, height, {}};
  for (std::size_t off = 0; off < b.size(); off += frame_bytes) {
    Tensor f({1, 3, height, width});
    auto o = f.mutable_values();
    for (std::size_t i = 0; i < frame_bytes; ++i) o[i] = b[off + i] / 255.0;
    v.frames.push_back(std::move(f));
  }
  return v;
}

void write_raw_rgb(const std::filesystem::path& path, const std::vector<Tensor>& frames) {
  require_frames(frames, "write_raw_rgb");
  std::vector<std::uint8_t> out;
  out.reserve(frames.size() * frames[0].numel());
  for (const Tensor& f : frames)
    for (double v : f.values()) out.push_back(to_u8(v));
  dump(path, out);
}

Video read_video(const std::filesystem::path& path, int width, int height) {
  if (path.extension() == ".y4m") return read_y4m(path);
  return read_raw_rgb(path, width, height);
}

void write_video(const std::filesystem::path& path, const std::vector<Tensor>& frames) {
  if (path.extension() == ".y4m")
    write_y4m(path, frames);
  else
    write_raw_rgb(path, frames);
}

}  // namespace lhbvc
