// Copyright (c) 2026 the relight authors.
// The relight source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef RELIGHT_PNG_HPP
#define RELIGHT_PNG_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "relight/common.hpp"
#include "relight/image.hpp"

namespace relight {

namespace png_detail {

inline void put_u32(std::vector<unsigned char>& out, uint32_t v) {
  out.push_back((v >> 24) & 0xff);
  out.push_back((v >> 16) & 0xff);
  out.push_back((v >> 8) & 0xff);
  out.push_back(v & 0xff);
}

inline void put_chunk(std::vector<unsigned char>& out, const char type[4],
                      const std::vector<unsigned char>& payload) {
  put_u32(out, static_cast<uint32_t>(payload.size()));
  const size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const uLong crc = crc32(crc32(0L, nullptr, 0), out.data() + crc_start,
                          static_cast<uInt>(out.size() - crc_start));
  put_u32(out, static_cast<uint32_t>(crc));
}

inline uint8_t quantize_srgb(float linear) {
  return static_cast<uint8_t>(std::lround(255.0f * linear_to_srgb(linear)));
}

}  // namespace png_detail

// 8-bit sRGB export: clamps to [0,1], applies the sRGB transfer, quantizes.
// Grayscale for 1 channel, RGB for 3; no alpha.
inline void save_png_srgb(const RasterImage& img, const std::string& path) {
  if (img.channels != 1 && img.channels != 3)
    throw DataError("save_png_srgb: unsupported channel count " + std::to_string(img.channels));

  const int ch = img.channels;
  const size_t stride = static_cast<size_t>(img.width) * ch;
  std::vector<unsigned char> raw;
  raw.reserve((stride + 1) * img.height);
  for (int y = 0; y < img.height; ++y) {
    raw.push_back(0);  // filter type: none
    const float* src = &img.data[y * stride];
    for (size_t i = 0; i < stride; ++i) raw.push_back(png_detail::quantize_srgb(src[i]));
  }

  uLongf comp_size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> comp(comp_size);
  if (compress2(comp.data(), &comp_size, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw DataError("save_png_srgb: deflate failed");
  comp.resize(comp_size);

  std::vector<unsigned char> out;
  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  out.insert(out.end(), sig, sig + 8);

  std::vector<unsigned char> ihdr;
  png_detail::put_u32(ihdr, static_cast<uint32_t>(img.width));
  png_detail::put_u32(ihdr, static_cast<uint32_t>(img.height));
  ihdr.push_back(8);                      // bit depth
  ihdr.push_back(ch == 3 ? 2 : 0);        // color type: truecolor / grayscale
  ihdr.push_back(0);                      // compression
  ihdr.push_back(0);                      // filter
  ihdr.push_back(0);                      // interlace
  png_detail::put_chunk(out, "IHDR", ihdr);
  png_detail::put_chunk(out, "IDAT", comp);
  png_detail::put_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("save_png_srgb: cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("save_png_srgb: write failed for '" + path + "'");
}

}  // namespace relight

#endif  // RELIGHT_PNG_HPP
