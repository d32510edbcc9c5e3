// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint file: "REFSAM1\n" followed by records of
//   u16 LE name length, UTF-8 name, u8 rank, rank x u32 LE extents,
//   prod(extents) x f32 LE values.
// The model configuration travels as the record "meta.config", a rank-1 run
// of byte values holding the serialized model section.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "refvos/model.hpp"

namespace refvos {

struct CheckpointRecord {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<float> values;
};

std::string encode_checkpoint(const std::vector<CheckpointRecord>& records);
// Throws ParseError (with byte offset) on any structural problem.
std::vector<CheckpointRecord> decode_checkpoint(const std::string& bytes);

template <typename Scalar>
std::vector<CheckpointRecord> checkpoint_records(const Model<Scalar>& model);

// Model configuration stored in the checkpoint; ParseError when absent.
ModelConfig checkpoint_model_config(const std::vector<CheckpointRecord>& records);

// Copies every model parameter from the records. Missing records raise
// ParseError; a shape mismatch raises DimensionError.
template <typename Scalar>
void load_parameters(const std::vector<CheckpointRecord>& records, Model<Scalar>& model);

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const Model<Scalar>& model);
std::vector<CheckpointRecord> read_checkpoint(const std::filesystem::path& path);

extern template std::vector<CheckpointRecord> checkpoint_records(const Model<float>&);
extern template std::vector<CheckpointRecord> checkpoint_records(const Model<double>&);
extern template void load_parameters(const std::vector<CheckpointRecord>&, Model<float>&);
extern template void load_parameters(const std::vector<CheckpointRecord>&, Model<double>&);
extern template void save_checkpoint(const std::filesystem::path&, const Model<float>&);
extern template void save_checkpoint(const std::filesystem::path&, const Model<double>&);

}  // namespace refvos
