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

#ifndef BODYSCENE_COMMON_IMAGE_H_
#define BODYSCENE_COMMON_IMAGE_H_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace bodyscene {

class RasterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// H x W x 3 interleaved RGB, values in [0,1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> rgb;

  Image() = default;
  Image(int h, int w, float fill = 0.0f)
      : height(h), width(w), rgb(static_cast<std::size_t>(h) * w * 3, fill) {}

  float& at(int y, int x, int c) { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }

  bool operator==(const Image&) const = default;
};

// Binary H x W image; every value is 0 or 1.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), bits(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::size_t area() const;
  bool empty_region() const { return area() == 0; }
  // Every set pixel of *this is also set in other.
  bool subset_of(const Mask& other) const;

  bool operator==(const Mask&) const = default;
};

// H x W x 2 interleaved (dx, dy) displacement in pixels per frame.
struct FlowField {
  int height = 0;
  int width = 0;
  std::vector<float> uv;

  FlowField() = default;
  FlowField(int h, int w)
      : height(h), width(w), uv(static_cast<std::size_t>(h) * w * 2, 0.0f) {}

  float& u(int y, int x) { return uv[(static_cast<std::size_t>(y) * width + x) * 2]; }
  float& v(int y, int x) { return uv[(static_cast<std::size_t>(y) * width + x) * 2 + 1]; }
  float u(int y, int x) const { return uv[(static_cast<std::size_t>(y) * width + x) * 2]; }
  float v(int y, int x) const { return uv[(static_cast<std::size_t>(y) * width + x) * 2 + 1]; }

  bool operator==(const FlowField&) const = default;
};

// Rounds to the nearest of the 256 levels k/255 that an 8-bit raster holds.
float quantize8(float v);
void quantize8(Image& image);
std::uint8_t to_byte(float v);

// Binary PPM (P6), 8-bit.
void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);
std::string encode_ppm(const Image& image);
Image decode_ppm(const std::string& bytes);

// Binary PGM (P5), 0 or 255 per pixel.
void write_mask_pgm(const std::filesystem::path& path, const Mask& mask);
Mask read_mask_pgm(const std::filesystem::path& path);

// u32 H, u32 W, then H*W*2 float32 (dx, dy), all little-endian.
void write_flow(const std::filesystem::path& path, const FlowField& flow);
FlowField read_flow(const std::filesystem::path& path);

}  // namespace bodyscene

#endif  // BODYSCENE_COMMON_IMAGE_H_
