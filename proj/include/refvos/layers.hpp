// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "refvos/ops.hpp"
#include "refvos/parameters.hpp"

namespace refvos {

template <typename Scalar>
struct Linear {
  Var<Scalar> weight;  // in x out
  Var<Scalar> bias;    // 1 x out

  static Linear make(ParameterSet<Scalar>& params, const std::string& name, ModuleTag tag, int in, int out,
                     Rng& rng, Init weight_init = Init::kXavier);
  Var<Scalar> operator()(const Var<Scalar>& x) const { return linear(x, weight, bias); }
};

template <typename Scalar>
struct LayerNorm {
  Var<Scalar> gamma;
  Var<Scalar> beta;

  static LayerNorm make(ParameterSet<Scalar>& params, const std::string& name, ModuleTag tag, int width, Rng& rng);
  Var<Scalar> operator()(const Var<Scalar>& x) const { return layer_norm(x, gamma, beta); }
};

// Multi-head scaled dot-product attention with separate projections.
// Projects embed_dim -> internal_dim, splits into heads, and maps back.
template <typename Scalar>
struct Attention {
  Linear<Scalar> q, k, v, out;
  int heads = 1;

  static Attention make(ParameterSet<Scalar>& params, const std::string& name, ModuleTag tag, int embed_dim,
                        int internal_dim, int heads, Rng& rng);
  Var<Scalar> operator()(const Var<Scalar>& queries, const Var<Scalar>& keys, const Var<Scalar>& values) const;
};

// Stack of linear layers with ReLU between them (not after the last).
template <typename Scalar>
struct Mlp {
  std::vector<Linear<Scalar>> layers;

  static Mlp make(ParameterSet<Scalar>& params, const std::string& name, ModuleTag tag,
                  const std::vector<int>& widths, Rng& rng);
  Var<Scalar> operator()(const Var<Scalar>& x) const;
};

// Fixed 2-D sinusoidal embedding, (height*width) x dim, pixel-major. The first
// half of the channels encodes the row, the second half the column.
template <typename Scalar>
Matrix<Scalar> sinusoid_2d(int height, int width, int dim);

extern template struct Linear<float>;
extern template struct Linear<double>;
extern template struct LayerNorm<float>;
extern template struct LayerNorm<double>;
extern template struct Attention<float>;
extern template struct Attention<double>;
extern template struct Mlp<float>;
extern template struct Mlp<double>;
extern template Matrix<float> sinusoid_2d<float>(int, int, int);
extern template Matrix<double> sinusoid_2d<double>(int, int, int);

}  // namespace refvos
