// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace refvos::cli {

// Process exit codes. Each failure class gets its own code.
enum ExitCode : int {
  kOk = 0,
  kIoFailure = 1,
  kBadConfig = 2,     // also command-line usage errors
  kMissingToken = 3,
  kMalformedFile = 4,  // checkpoint, PGM/PPM, or embedding file
  kShapeMismatch = 5,
  kNumericFailure = 6,
  kGenerationFailure = 7,
};

struct TrainOptions {
  std::filesystem::path config;
  std::filesystem::path checkpoint;
  std::optional<std::filesystem::path> log;  // appended loss lines
};

int cmd_generate(const std::filesystem::path& config, const std::filesystem::path& out_dir, std::ostream& out);
int cmd_train(const TrainOptions& options, std::ostream& out);
// With `predictions`, scores stored masks (<predictions>/<clip_id>/%05d.pgm)
// instead of running the model; the checkpoint is then not needed.
int cmd_eval(const std::optional<std::filesystem::path>& config, const std::optional<std::filesystem::path>& checkpoint,
             const std::filesystem::path& data, const std::optional<std::filesystem::path>& predictions,
             std::ostream& out);
// Writes <out>/%05d.pgm; out defaults to <clip>/pred. The expression defaults
// to the clip's expression.txt.
int cmd_infer(const std::filesystem::path& checkpoint, const std::filesystem::path& clip,
              const std::optional<std::string>& expression, const std::optional<std::filesystem::path>& out_dir,
              std::ostream& out);
int cmd_overlay(const std::filesystem::path& clip, const std::filesystem::path& masks,
                const std::filesystem::path& out_dir, std::ostream& out);

// Parses argv, dispatches, and maps library errors to exit codes. Messages
// for failures go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace refvos::cli
