// SPDX-License-Identifier: Apache-2.0
//
// On-disk layout, one directory per clip:
//   <root>/<clip_id>/frames/00000.ppm ...
//   <root>/<clip_id>/masks/00000.pgm ...
//   <root>/<clip_id>/expression.txt      (one lowercase expression per line)
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "refvos/image.hpp"
#include "refvos/text.hpp"

namespace refvos {

struct Sample {
  std::string id;
  VideoClip frames;
  MaskSequence masks;  // empty when the clip has no ground truth
  ReferringExpression expression;
};

using Dataset = std::vector<Sample>;

// "%05d" frame file name with the given extension (".ppm" / ".pgm").
std::string frame_file_name(std::size_t index, const std::string& extension);

void write_sample(const std::filesystem::path& root, const Sample& sample);
// Reads frames, masks (if the directory exists), and the first expression line.
Sample read_sample(const std::filesystem::path& clip_dir);

void write_dataset(const std::filesystem::path& root, const Dataset& dataset);
// Clip directories in lexicographic order.
Dataset read_dataset(const std::filesystem::path& root);

MaskSequence read_mask_dir(const std::filesystem::path& dir);
void write_mask_dir(const std::filesystem::path& dir, const MaskSequence& masks);

}  // namespace refvos
