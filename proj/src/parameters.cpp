// SPDX-License-Identifier: Apache-2.0
#include "refvos/parameters.hpp"

#include <cmath>

namespace refvos {

std::string_view tag_name(ModuleTag tag) {
  switch (tag) {
    case ModuleTag::kNone: return "none";
    case ModuleTag::kEncoder: return "encoder";
    case ModuleTag::kAdapter: return "adapter";
    case ModuleTag::kText: return "text";
    case ModuleTag::kCrossModalMlp: return "cross_modal_mlp";
    case ModuleTag::kFusion: return "fusion";
    case ModuleTag::kDecoder: return "decoder";
    case ModuleTag::kTracking: return "itm";
  }
  return "none";
}

bool is_trainable_tag(ModuleTag tag) {
  return tag != ModuleTag::kEncoder && tag != ModuleTag::kText && tag != ModuleTag::kNone;
}

template <typename Scalar>
Var<Scalar> ParameterSet<Scalar>::add(const std::string& name, ModuleTag tag, std::vector<std::uint32_t> shape,
                                      Init init, Rng& rng, double std_dev) {
  if (index_.count(name) != 0) throw ConfigError("duplicate parameter name: " + name);
  if (shape.empty() || shape.size() > 2) throw DimensionError("parameter " + name + " must have rank 1 or 2");
  const Index rows = shape.size() == 1 ? 1 : shape[0];
  const Index cols = shape.size() == 1 ? shape[0] : shape[1];
  Matrix<Scalar> value(rows, cols);
  switch (init) {
    case Init::kZeros: value.setZero(); break;
    case Init::kOnes: value.setOnes(); break;
    case Init::kXavier: {
      const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
      for (Index i = 0; i < value.size(); ++i) value.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
      break;
    }
    case Init::kNormal:
      for (Index i = 0; i < value.size(); ++i) value.data()[i] = static_cast<Scalar>(std_dev * rng.normal());
      break;
  }
  Var<Scalar> var(std::move(value), false);
  index_.emplace(name, params_.size());
  params_.push_back(Parameter<Scalar>{name, tag, std::move(shape), var});
  return var;
}

template <typename Scalar>
const Parameter<Scalar>* ParameterSet<Scalar>::find(const std::string& name) const {
  const auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

template <typename Scalar>
Parameter<Scalar>* ParameterSet<Scalar>::find(const std::string& name) {
  const auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

template <typename Scalar>
std::size_t ParameterSet<Scalar>::count_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.var.size());
  return n;
}

template <typename Scalar>
void ParameterSet<Scalar>::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

template <typename Scalar>
Partition freeze_partition(const ParameterSet<Scalar>& params) {
  Partition out;
  for (const auto& p : params.all()) {
    if (p.tag == ModuleTag::kNone) throw ConfigError("parameter without module tag: " + p.name);
    (is_trainable_tag(p.tag) ? out.trainable : out.frozen).insert(p.name);
  }
  return out;
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template Partition freeze_partition(const ParameterSet<float>&);
template Partition freeze_partition(const ParameterSet<double>&);

}  // namespace refvos
