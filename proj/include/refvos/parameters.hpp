// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "refvos/random.hpp"
#include "refvos/tensor.hpp"

namespace refvos {

// Which part of the model a parameter belongs to. Drives freezing and the
// per-module learning rate.
enum class ModuleTag {
  kNone,
  kEncoder,        // frozen visual backbone
  kAdapter,        // trainable bottlenecks inside the backbone
  kText,           // frozen text provider
  kCrossModalMlp,  // text -> prompt-space projection
  kFusion,         // dense attention branches and their reduce convs
  kDecoder,
  kTracking,
};

std::string_view tag_name(ModuleTag tag);

enum class Init { kZeros, kOnes, kXavier, kNormal };

template <typename Scalar>
struct Parameter {
  std::string name;
  ModuleTag tag = ModuleTag::kNone;
  std::vector<std::uint32_t> shape;  // logical extents (rank 1 for biases and norms)
  Var<Scalar> var;
};

// Ordered registry of every learnable (or frozen) leaf in a model. Order is
// registration order, which fixes both initialization draws and checkpoint
// record order.
template <typename Scalar>
class ParameterSet {
 public:
  // rows x cols leaf. A rank-1 parameter of width n is stored as 1 x n.
  Var<Scalar> add(const std::string& name, ModuleTag tag, std::vector<std::uint32_t> shape, Init init,
                  Rng& rng, double std_dev = 0.02);

  std::size_t size() const { return params_.size(); }
  const std::vector<Parameter<Scalar>>& all() const { return params_; }
  std::vector<Parameter<Scalar>>& all() { return params_; }
  const Parameter<Scalar>* find(const std::string& name) const;
  Parameter<Scalar>* find(const std::string& name);

  std::size_t count_values() const;
  void zero_grad();

 private:
  std::vector<Parameter<Scalar>> params_;
  std::map<std::string, std::size_t> index_;
};

struct Partition {
  std::set<std::string> frozen;
  std::set<std::string> trainable;
};

// frozen = backbone (non-adapter) and text provider; trainable = everything
// else. Throws ConfigError on an untagged parameter.
template <typename Scalar>
Partition freeze_partition(const ParameterSet<Scalar>& params);

bool is_trainable_tag(ModuleTag tag);

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;
extern template Partition freeze_partition(const ParameterSet<float>&);
extern template Partition freeze_partition(const ParameterSet<double>&);

}  // namespace refvos
