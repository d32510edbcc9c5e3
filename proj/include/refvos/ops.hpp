// SPDX-License-Identifier: Apache-2.0
//
// Differentiable elementary ops. All take and return Var<Scalar>; shape
// violations throw DimensionError naming the op.
#pragma once

#include <vector>

#include "refvos/tensor.hpp"

namespace refvos {

template <typename Scalar>
Var<Scalar> constant(Matrix<Scalar> value) {
  return Var<Scalar>(std::move(value), false);
}

// Elementwise arithmetic on equal shapes.
template <typename Scalar> Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> scale(const Var<Scalar>& a, Scalar s);

// x + b with b a 1 x cols row broadcast over the rows of x.
template <typename Scalar> Var<Scalar> add_row(const Var<Scalar>& x, const Var<Scalar>& b);

template <typename Scalar> Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b);
// a * b^T
template <typename Scalar> Var<Scalar> matmul_nt(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> transpose(const Var<Scalar>& a);

// y = x W + b; x is n x D_in, W is D_in x D_out, b is 1 x D_out.
template <typename Scalar>
Var<Scalar> linear(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias);

// Per-pixel linear map on a pixel-major (H*W) x C_in map, accumulated in
// input-channel order.
template <typename Scalar>
Var<Scalar> conv1x1(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias);

template <typename Scalar> Var<Scalar> relu(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> gelu(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> sigmoid(const Var<Scalar>& x);

// Normalizes each row (the last axis); gamma and beta are 1 x cols.
template <typename Scalar>
Var<Scalar> layer_norm(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                       Scalar eps = Scalar(1e-5));

// axis 1 normalizes each row, axis 0 each column.
template <typename Scalar> Var<Scalar> softmax(const Var<Scalar>& x, int axis);
template <typename Scalar> Var<Scalar> softmax_rows(const Var<Scalar>& x);

template <typename Scalar> Var<Scalar> sum(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> mean(const Var<Scalar>& x);
// 1 x cols mean over rows.
template <typename Scalar> Var<Scalar> mean_rows(const Var<Scalar>& x);

template <typename Scalar> Var<Scalar> slice_rows(const Var<Scalar>& x, Index start, Index count);
template <typename Scalar> Var<Scalar> slice_cols(const Var<Scalar>& x, Index start, Index count);
template <typename Scalar> Var<Scalar> concat_rows(const std::vector<Var<Scalar>>& parts);
template <typename Scalar> Var<Scalar> concat_cols(const std::vector<Var<Scalar>>& parts);
// Row-major reinterpretation; element count must match.
template <typename Scalar> Var<Scalar> reshape(const Var<Scalar>& x, Index rows, Index cols);

// Resizes a single-channel height x width map (half-pixel centres, edge clamped).
template <typename Scalar> Var<Scalar> bilinear_resize(const Var<Scalar>& x, Index out_h, Index out_w);

// Kernel-2 stride-2 transposed convolution on a pixel-major (height*width) x C_in
// map. weight is C_in x (4*C_out), column block (2*dy+dx) feeding output pixel
// (2y+dy, 2x+dx); bias is 1 x C_out. Returns a (2*height*2*width) x C_out map.
template <typename Scalar>
Var<Scalar> transposed_conv_upscale(const Var<Scalar>& x, Index height, Index width,
                                    const Var<Scalar>& weight, const Var<Scalar>& bias);

// Interpolation matrix used by bilinear_resize along one axis (out x in).
template <typename Scalar> Matrix<Scalar> bilinear_weights(Index in, Index out);

#define REFVOS_DECLARE_OPS(S)                                                                  \
  extern template Var<S> add(const Var<S>&, const Var<S>&);                                    \
  extern template Var<S> sub(const Var<S>&, const Var<S>&);                                    \
  extern template Var<S> mul(const Var<S>&, const Var<S>&);                                    \
  extern template Var<S> scale(const Var<S>&, S);                                              \
  extern template Var<S> add_row(const Var<S>&, const Var<S>&);                                \
  extern template Var<S> matmul(const Var<S>&, const Var<S>&);                                 \
  extern template Var<S> matmul_nt(const Var<S>&, const Var<S>&);                              \
  extern template Var<S> transpose(const Var<S>&);                                             \
  extern template Var<S> linear(const Var<S>&, const Var<S>&, const Var<S>&);                  \
  extern template Var<S> conv1x1(const Var<S>&, const Var<S>&, const Var<S>&);                 \
  extern template Var<S> relu(const Var<S>&);                                                  \
  extern template Var<S> gelu(const Var<S>&);                                                  \
  extern template Var<S> sigmoid(const Var<S>&);                                               \
  extern template Var<S> layer_norm(const Var<S>&, const Var<S>&, const Var<S>&, S);           \
  extern template Var<S> softmax(const Var<S>&, int);                                          \
  extern template Var<S> softmax_rows(const Var<S>&);                                          \
  extern template Var<S> sum(const Var<S>&);                                                   \
  extern template Var<S> mean(const Var<S>&);                                                  \
  extern template Var<S> mean_rows(const Var<S>&);                                             \
  extern template Var<S> slice_rows(const Var<S>&, Index, Index);                              \
  extern template Var<S> slice_cols(const Var<S>&, Index, Index);                              \
  extern template Var<S> concat_rows(const std::vector<Var<S>>&);                              \
  extern template Var<S> concat_cols(const std::vector<Var<S>>&);                              \
  extern template Var<S> reshape(const Var<S>&, Index, Index);                                 \
  extern template Var<S> bilinear_resize(const Var<S>&, Index, Index);                         \
  extern template Var<S> transposed_conv_upscale(const Var<S>&, Index, Index, const Var<S>&,   \
                                                 const Var<S>&);                               \
  extern template Matrix<S> bilinear_weights<S>(Index, Index);

REFVOS_DECLARE_OPS(float)
REFVOS_DECLARE_OPS(double)
#undef REFVOS_DECLARE_OPS

}  // namespace refvos
