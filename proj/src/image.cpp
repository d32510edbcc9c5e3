// SPDX-License-Identifier: Apache-2.0
#include "refvos/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "refvos/errors.hpp"

namespace refvos {

std::size_t Mask::area() const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

namespace {

struct Header {
  int width = 0;
  int height = 0;
  std::size_t payload = 0;  // offset of the first pixel byte
};

// Netpbm header: magic, whitespace/comments, width, height, maxval, one whitespace byte.
Header parse_header(const std::string& bytes, const char* magic, const char* kind) {
  if (bytes.size() < 2 || bytes[0] != magic[0] || bytes[1] != magic[1]) {
    throw ParseError(std::string("not a binary ") + kind + " file", 0);
  }
  std::size_t pos = 2;
  const auto skip_space = [&] {
    while (pos < bytes.size()) {
      const char c = bytes[pos];
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  const auto read_int = [&](const char* field) {
    skip_space();
    const std::size_t start = pos;
    long value = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      value = value * 10 + (bytes[pos] - '0');
      if (value > 1'000'000) throw ParseError(std::string(kind) + " " + field + " too large", start);
      ++pos;
    }
    if (pos == start) throw ParseError(std::string(kind) + " header: expected " + field, start);
    return static_cast<int>(value);
  };
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw ParseError(std::string(kind) + " header: expected whitespace after magic", pos);
  }
  Header h;
  h.width = read_int("width");
  h.height = read_int("height");
  const std::size_t maxval_at = pos;
  const int maxval = read_int("maxval");
  if (maxval != 255) throw ParseError(std::string(kind) + " maxval must be 255", maxval_at);
  if (h.width <= 0 || h.height <= 0) throw ParseError(std::string(kind) + " extents must be positive", maxval_at);
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw ParseError(std::string(kind) + " header: expected whitespace after maxval", pos);
  }
  h.payload = pos + 1;
  return h;
}

std::uint8_t to_byte(float v) {
  const float clamped = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

}  // namespace

std::string encode_pgm(const Mask& mask) {
  std::ostringstream out;
  out << "P5\n" << mask.width << ' ' << mask.height << "\n255\n";
  std::string bytes = out.str();
  bytes.reserve(bytes.size() + mask.data.size());
  for (const auto v : mask.data) bytes.push_back(v ? static_cast<char>(0xFF) : static_cast<char>(0x00));
  return bytes;
}

Mask decode_pgm(const std::string& bytes) {
  const Header h = parse_header(bytes, "P5", "PGM");
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
  if (bytes.size() < h.payload + n) throw ParseError("PGM payload truncated", bytes.size());
  Mask mask(h.height, h.width);
  for (std::size_t i = 0; i < n; ++i) {
    mask.data[i] = static_cast<unsigned char>(bytes[h.payload + i]) >= 128 ? 1 : 0;
  }
  return mask;
}

std::string encode_ppm(const Image& image) {
  std::ostringstream out;
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  std::string bytes = out.str();
  const std::size_t plane = static_cast<std::size_t>(image.height) * image.width;
  bytes.reserve(bytes.size() + 3 * plane);
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) bytes.push_back(static_cast<char>(to_byte(image.data[c * plane + i])));
  }
  return bytes;
}

Image decode_ppm(const std::string& bytes) {
  const Header h = parse_header(bytes, "P6", "PPM");
  const std::size_t plane = static_cast<std::size_t>(h.width) * h.height;
  if (bytes.size() < h.payload + 3 * plane) throw ParseError("PPM payload truncated", bytes.size());
  Image image(h.height, h.width);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      image.data[c * plane + i] = static_cast<float>(static_cast<unsigned char>(bytes[h.payload + 3 * i + c])) / 255.0f;
    }
  }
  return image;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

void write_mask(const std::filesystem::path& path, const Mask& mask) { write_file(path, encode_pgm(mask)); }
Mask read_mask(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }
void write_image(const std::filesystem::path& path, const Image& image) { write_file(path, encode_ppm(image)); }
Image read_image(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }

}  // namespace refvos
