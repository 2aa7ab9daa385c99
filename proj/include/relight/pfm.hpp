// Copyright (c) 2026 the relight authors.
// The relight source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef RELIGHT_PFM_HPP
#define RELIGHT_PFM_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "relight/common.hpp"
#include "relight/image.hpp"

namespace relight {

namespace pfm_detail {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

struct Cursor {
  const std::string& path;
  const std::vector<char>& bytes;
  size_t pos = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(path + ": " + what + " at byte offset " + std::to_string(pos));
  }

  std::string token() {
    while (pos < bytes.size() && is_space(bytes[pos])) ++pos;
    if (pos >= bytes.size()) fail("unexpected end of header");
    size_t start = pos;
    while (pos < bytes.size() && !is_space(bytes[pos])) ++pos;
    return std::string(&bytes[start], pos - start);
  }
};

}  // namespace pfm_detail

// Portable float map. Values are returned exactly as stored (no clamping);
// scanlines are normalized to top-down row-major order. The scale sign only
// selects payload endianness.
inline RasterImage load_pfm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(path + ": cannot open file");
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)),
                          std::istreambuf_iterator<char>());

  pfm_detail::Cursor cur{path, bytes};
  const std::string magic = cur.token();
  int channels;
  if (magic == "PF") {
    channels = 3;
  } else if (magic == "Pf") {
    channels = 1;
  } else {
    cur.pos = 0;
    cur.fail("bad magic '" + magic + "' (expected PF or Pf)");
  }

  int width = 0, height = 0;
  double scale = 0.0;
  try {
    width = std::stoi(cur.token());
    height = std::stoi(cur.token());
    scale = std::stod(cur.token());
  } catch (const std::exception&) {
    cur.fail("malformed dimension or scale token");
  }
  if (width <= 0 || height <= 0) cur.fail("non-positive dimensions");
  if (scale == 0.0) cur.fail("zero scale");

  // exactly one whitespace byte separates the header from the payload
  if (cur.pos >= bytes.size() || !pfm_detail::is_space(bytes[cur.pos]))
    cur.fail("missing separator before payload");
  ++cur.pos;

  const bool little_endian = scale < 0.0;
  const size_t count = static_cast<size_t>(width) * height * channels;
  if (bytes.size() - cur.pos < count * 4) {
    cur.pos = bytes.size();
    throw FormatError(path + ": truncated payload, expected " + std::to_string(count * 4) +
                      " bytes after byte offset " + std::to_string(cur.pos - (bytes.size() - cur.pos)) +
                      ", got " + std::to_string(bytes.size() - cur.pos));
  }

  RasterImage img(width, height, channels);
  const unsigned char* p = reinterpret_cast<const unsigned char*>(&bytes[cur.pos]);
  // PFM payload rows run bottom-up
  for (int y = 0; y < height; ++y) {
    float* dst = &img.data[static_cast<size_t>(height - 1 - y) * width * channels];
    for (size_t i = 0; i < static_cast<size_t>(width) * channels; ++i) {
      uint32_t u;
      if (little_endian) {
        u = uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
      } else {
        u = uint32_t(p[3]) | uint32_t(p[2]) << 8 | uint32_t(p[1]) << 16 | uint32_t(p[0]) << 24;
      }
      std::memcpy(&dst[i], &u, 4);
      p += 4;
    }
  }
  return img;
}

// Writes little-endian payload, bottom-up scanlines, scale -1.0.
inline void save_pfm(const RasterImage& img, const std::string& path) {
  if (img.channels != 1 && img.channels != 3)
    throw DataError("save_pfm: unsupported channel count " + std::to_string(img.channels));
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("save_pfm: cannot open '" + path + "' for writing");
  f << (img.channels == 3 ? "PF" : "Pf") << "\n"
    << img.width << " " << img.height << "\n"
    << "-1.0\n";
  const size_t row = static_cast<size_t>(img.width) * img.channels;
  for (int y = img.height - 1; y >= 0; --y) {
    const float* src = &img.data[static_cast<size_t>(y) * row];
    unsigned char buf[4];
    for (size_t i = 0; i < row; ++i) {
      uint32_t u;
      std::memcpy(&u, &src[i], 4);
      buf[0] = u & 0xff;
      buf[1] = (u >> 8) & 0xff;
      buf[2] = (u >> 16) & 0xff;
      buf[3] = (u >> 24) & 0xff;
      f.write(reinterpret_cast<const char*>(buf), 4);
    }
  }
  if (!f) throw DataError("save_pfm: write failed for '" + path + "'");
}

}  // namespace relight

#endif  // RELIGHT_PFM_HPP
