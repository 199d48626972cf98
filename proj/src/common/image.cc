// Copyright 2026 The bodyscene Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "bodyscene/common/image.h"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace bodyscene {
namespace {

std::string ReadAll(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RasterError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

void WriteAll(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RasterError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw RasterError("write failed for " + path.string());
}

// Parses "P5"/"P6" headers (no comments); returns offset of the pixel data.
std::size_t ParseHeader(const std::string& bytes, const char* magic, int& h,
                        int& w) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  if (token() != magic) throw RasterError(std::string("expected ") + magic + " raster");
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    if (std::stoi(token()) != 255) throw RasterError("only 8-bit rasters are supported");
  } catch (const std::logic_error&) {
    throw RasterError("malformed raster header");
  }
  if (h <= 0 || w <= 0) throw RasterError("raster has empty extents");
  return pos + 1;  // single whitespace byte after maxval
}

}  // namespace

std::size_t Mask::area() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1));
}

bool Mask::subset_of(const Mask& other) const {
  if (other.height != height || other.width != width) return false;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] && !other.bits[i]) return false;
  }
  return true;
}

std::uint8_t to_byte(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

float quantize8(float v) { return static_cast<float>(to_byte(v)) / 255.0f; }

void quantize8(Image& image) {
  for (float& v : image.rgb) v = quantize8(v);
}

std::string encode_ppm(const Image& image) {
  std::string out = "P6\n" + std::to_string(image.width) + " " +
                    std::to_string(image.height) + "\n255\n";
  out.reserve(out.size() + image.rgb.size());
  for (float v : image.rgb) out.push_back(static_cast<char>(to_byte(v)));
  return out;
}

Image decode_ppm(const std::string& bytes) {
  int h = 0, w = 0;
  const std::size_t offset = ParseHeader(bytes, "P6", h, w);
  Image img(h, w);
  if (bytes.size() < offset + img.rgb.size()) throw RasterError("truncated PPM data");
  for (std::size_t i = 0; i < img.rgb.size(); ++i) {
    img.rgb[i] = static_cast<float>(static_cast<std::uint8_t>(bytes[offset + i])) / 255.0f;
  }
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  WriteAll(path, encode_ppm(image));
}

Image read_ppm(const std::filesystem::path& path) {
  try {
    return decode_ppm(ReadAll(path));
  } catch (const RasterError& e) {
    throw RasterError(path.string() + ": " + e.what());
  }
}

void write_mask_pgm(const std::filesystem::path& path, const Mask& mask) {
  std::string out = "P5\n" + std::to_string(mask.width) + " " +
                    std::to_string(mask.height) + "\n255\n";
  for (std::uint8_t b : mask.bits) out.push_back(static_cast<char>(b ? 255 : 0));
  WriteAll(path, out);
}

Mask read_mask_pgm(const std::filesystem::path& path) {
  const std::string bytes = ReadAll(path);
  int h = 0, w = 0;
  std::size_t offset = 0;
  try {
    offset = ParseHeader(bytes, "P5", h, w);
  } catch (const RasterError& e) {
    throw RasterError(path.string() + ": " + e.what());
  }
  Mask m(h, w);
  if (bytes.size() < offset + m.bits.size()) {
    throw RasterError(path.string() + ": truncated PGM data");
  }
  for (std::size_t i = 0; i < m.bits.size(); ++i) {
    m.bits[i] = static_cast<std::uint8_t>(bytes[offset + i]) >= 128 ? 1 : 0;
  }
  return m;
}

void write_flow(const std::filesystem::path& path, const FlowField& flow) {
  std::string out;
  out.reserve(8 + flow.uv.size() * 4);
  auto put = [&out](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  put(static_cast<std::uint32_t>(flow.height));
  put(static_cast<std::uint32_t>(flow.width));
  for (float v : flow.uv) put(std::bit_cast<std::uint32_t>(v));
  WriteAll(path, out);
}

FlowField read_flow(const std::filesystem::path& path) {
  const std::string bytes = ReadAll(path);
  auto get = [&bytes](std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[at + i])) << (8 * i);
    }
    return v;
  };
  if (bytes.size() < 8) throw RasterError(path.string() + ": truncated flow header");
  const int h = static_cast<int>(get(0));
  const int w = static_cast<int>(get(4));
  if (h <= 0 || w <= 0 || bytes.size() != 8 + static_cast<std::size_t>(h) * w * 8) {
    throw RasterError(path.string() + ": flow size does not match header");
  }
  FlowField f(h, w);
  for (std::size_t i = 0; i < f.uv.size(); ++i) f.uv[i] = std::bit_cast<float>(get(8 + 4 * i));
  return f;
}

}  // namespace bodyscene
