// SPDX-License-Identifier: Apache-2.0
#include "refvos/layers.hpp"

#include <cmath>

namespace refvos {

template <typename Scalar>
Linear<Scalar> Linear<Scalar>::make(ParameterSet<Scalar>& params, const std::string& name, ModuleTag tag, int in,
                                    int out, Rng& rng, Init weight_init) {
  Linear layer;
  layer.weight = params.add(name + ".weight", tag, {static_cast<std::uint32_t>(in), static_cast<std::uint32_t>(out)},
                            weight_init, rng);
  layer.bias = params.add(name + ".bias", tag, {static_cast<std::uint32_t>(out)}, Init::kZeros, rng);
  return layer;
}

template <typename Scalar>
LayerNorm<Scalar> LayerNorm<Scalar>::make(ParameterSet<Scalar>& params, const std::string& name, ModuleTag tag,
                                          int width, Rng& rng) {
  LayerNorm norm;
  norm.gamma = params.add(name + ".gamma", tag, {static_cast<std::uint32_t>(width)}, Init::kOnes, rng);
  norm.beta = params.add(name + ".beta", tag, {static_cast<std::uint32_t>(width)}, Init::kZeros, rng);
  return norm;
}

template <typename Scalar>
Attention<Scalar> Attention<Scalar>::make(ParameterSet<Scalar>& params, const std::string& name, ModuleTag tag,
                                          int embed_dim, int internal_dim, int heads, Rng& rng) {
  if (heads <= 0 || internal_dim % heads != 0) {
    throw DimensionError(name + ": internal width " + std::to_string(internal_dim) + " not divisible by " +
                         std::to_string(heads) + " heads");
  }
  Attention attn;
  attn.q = Linear<Scalar>::make(params, name + ".q", tag, embed_dim, internal_dim, rng);
  attn.k = Linear<Scalar>::make(params, name + ".k", tag, embed_dim, internal_dim, rng);
  attn.v = Linear<Scalar>::make(params, name + ".v", tag, embed_dim, internal_dim, rng);
  attn.out = Linear<Scalar>::make(params, name + ".out", tag, internal_dim, embed_dim, rng);
  attn.heads = heads;
  return attn;
}

template <typename Scalar>
Var<Scalar> Attention<Scalar>::operator()(const Var<Scalar>& queries, const Var<Scalar>& keys,
                                          const Var<Scalar>& values) const {
  const Var<Scalar> qp = q(queries);
  const Var<Scalar> kp = k(keys);
  const Var<Scalar> vp = v(values);
  const Index head_dim = qp.cols() / heads;
  const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(head_dim));
  if (heads == 1) {
    return out(matmul(softmax_rows(scale(matmul_nt(qp, kp), inv_sqrt)), vp));
  }
  std::vector<Var<Scalar>> per_head;
  per_head.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Var<Scalar> qh = slice_cols(qp, h * head_dim, head_dim);
    const Var<Scalar> kh = slice_cols(kp, h * head_dim, head_dim);
    const Var<Scalar> vh = slice_cols(vp, h * head_dim, head_dim);
    per_head.push_back(matmul(softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt)), vh));
  }
  return out(concat_cols(per_head));
}

template <typename Scalar>
Mlp<Scalar> Mlp<Scalar>::make(ParameterSet<Scalar>& params, const std::string& name, ModuleTag tag,
                              const std::vector<int>& widths, Rng& rng) {
  Mlp mlp;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    mlp.layers.push_back(
        Linear<Scalar>::make(params, name + ".fc" + std::to_string(i + 1), tag, widths[i], widths[i + 1], rng));
  }
  return mlp;
}

template <typename Scalar>
Var<Scalar> Mlp<Scalar>::operator()(const Var<Scalar>& x) const {
  Var<Scalar> h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h);
    if (i + 1 < layers.size()) h = relu(h);
  }
  return h;
}

template <typename Scalar>
Matrix<Scalar> sinusoid_2d(int height, int width, int dim) {
  Matrix<Scalar> pe(static_cast<Index>(height) * width, dim);
  const int half = dim / 2;
  for (int c = 0; c < dim; ++c) {
    const bool row_axis = c < half;
    const int group = row_axis ? half : dim - half;
    const int j = row_axis ? c : c - half;
    const double omega = std::pow(10000.0, -2.0 * static_cast<double>(j / 2) / static_cast<double>(group));
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double pos = row_axis ? y : x;
        pe(static_cast<Index>(y) * width + x, c) =
            static_cast<Scalar>(j % 2 == 0 ? std::sin(pos * omega) : std::cos(pos * omega));
      }
    }
  }
  return pe;
}

template struct Linear<float>;
template struct Linear<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;
template struct Attention<float>;
template struct Attention<double>;
template struct Mlp<float>;
template struct Mlp<double>;
template Matrix<float> sinusoid_2d<float>(int, int, int);
template Matrix<double> sinusoid_2d<double>(int, int, int);

}  // namespace refvos
