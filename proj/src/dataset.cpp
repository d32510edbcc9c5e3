// SPDX-License-Identifier: Apache-2.0
#include "refvos/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <system_error>

#include "refvos/errors.hpp"

namespace refvos {

namespace fs = std::filesystem;

std::string frame_file_name(std::size_t index, const std::string& extension) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu", index);
  return buf + extension;
}

namespace {

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

// Files with the given extension, sorted by name.
std::vector<fs::path> list_files(const fs::path& dir, const std::string& extension) {
  std::vector<fs::path> out;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == extension) out.push_back(entry.path());
  }
  if (ec) throw IoError("cannot list " + dir.string() + ": " + ec.message());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

void write_mask_dir(const fs::path& dir, const MaskSequence& masks) {
  make_dirs(dir);
  for (std::size_t t = 0; t < masks.size(); ++t) write_mask(dir / frame_file_name(t, ".pgm"), masks[t]);
}

MaskSequence read_mask_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  MaskSequence masks;
  for (const auto& p : list_files(dir, ".pgm")) masks.push_back(read_mask(p));
  return masks;
}

void write_sample(const fs::path& root, const Sample& sample) {
  if (sample.id.empty()) throw IoError("sample has no id");
  const fs::path dir = root / sample.id;
  make_dirs(dir / "frames");
  for (std::size_t t = 0; t < sample.frames.size(); ++t) {
    write_image(dir / "frames" / frame_file_name(t, ".ppm"), sample.frames[t]);
  }
  if (!sample.masks.empty()) write_mask_dir(dir / "masks", sample.masks);
  write_file(dir / "expression.txt", sample.expression.text() + "\n");
}

Sample read_sample(const fs::path& clip_dir) {
  if (!fs::is_directory(clip_dir / "frames")) throw IoError("missing frames directory in " + clip_dir.string());
  Sample s;
  s.id = clip_dir.filename().string();
  for (const auto& p : list_files(clip_dir / "frames", ".ppm")) s.frames.push_back(read_image(p));
  if (s.frames.empty()) throw IoError("no frames in " + clip_dir.string());
  if (fs::is_directory(clip_dir / "masks")) {
    s.masks = read_mask_dir(clip_dir / "masks");
    if (s.masks.size() != s.frames.size()) {
      throw IoError(clip_dir.string() + ": " + std::to_string(s.frames.size()) + " frames but " +
                    std::to_string(s.masks.size()) + " masks");
    }
  }
  if (fs::exists(clip_dir / "expression.txt")) {
    std::istringstream in(read_file(clip_dir / "expression.txt"));
    std::string line;
    std::getline(in, line);
    s.expression = ReferringExpression::parse(line);
  }
  return s;
}

void write_dataset(const fs::path& root, const Dataset& dataset) {
  make_dirs(root);
  for (const auto& s : dataset) write_sample(root, s);
}

Dataset read_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("dataset root is not a directory: " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  Dataset out;
  for (const auto& d : dirs) out.push_back(read_sample(d));
  return out;
}

}  // namespace refvos
