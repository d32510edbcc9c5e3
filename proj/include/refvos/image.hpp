// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace refvos {

// RGB frame, channel-planar (3 x height x width), values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(3) * h * w, 0.0f) {}

  float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
};

// Binary map, row-major, values in {0, 1}.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w, 0) {}

  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t area() const;
  bool operator==(const Mask&) const = default;
};

using VideoClip = std::vector<Image>;
using MaskSequence = std::vector<Mask>;

// 8-bit binary PGM ("P5"), foreground 255, background 0.
std::string encode_pgm(const Mask& mask);
// Pixels >= 128 read as foreground. Throws ParseError with the byte offset.
Mask decode_pgm(const std::string& bytes);
void write_mask(const std::filesystem::path& path, const Mask& mask);
Mask read_mask(const std::filesystem::path& path);

// 8-bit binary PPM ("P6").
std::string encode_ppm(const Image& image);
Image decode_ppm(const std::string& bytes);
void write_image(const std::filesystem::path& path, const Image& image);
Image read_image(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace refvos
