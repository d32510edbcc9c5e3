// SPDX-License-Identifier: Apache-2.0
//
// Text-to-prompt projection and pixel-level vision-language fusion.
//
// Dense attention on a pixel-major map X ((H0*W0) x C):
//   tokens  = [sentence; words]                         (L+1) x C
//   attn    = softmax_rows(X tokens^T / sqrt(C))         (H0*W0) x (L+1)
//   attended = attn tokens                               (H0*W0) x C
//   dense   = conv1x1([attended, X])                     2C -> C
// The hierarchical variant runs one such branch on the final map and one on
// each reduced intermediate map, and sums the four outputs.
#pragma once

#include <array>
#include <optional>

#include "refvos/encoders.hpp"
#include "refvos/text.hpp"

namespace refvos {

template <typename Scalar>
struct SparseEmbeddings {
  Var<Scalar> words;     // L x C_v
  Var<Scalar> sentence;  // 1 x C_v
};

// One hidden layer (C_e -> h -> C_v, ReLU) when `mlp` is set, otherwise a
// single linear map C_e -> C_v (the ablation without the MLP).
template <typename Scalar>
struct CrossModalParams {
  std::optional<Mlp<Scalar>> mlp;
  std::optional<Linear<Scalar>> linear_only;

  static CrossModalParams make(ParameterSet<Scalar>& params, int text_width, int hidden, int channels, bool use_mlp,
                               Rng& rng);
};

template <typename Scalar>
SparseEmbeddings<Scalar> cross_modal_project(const TextEmbeddings<Scalar>& text, const CrossModalParams<Scalar>& params);

template <typename Scalar>
struct DenseAttentionParams {
  Linear<Scalar> conv;  // 2*C_v -> C_v

  static DenseAttentionParams make(ParameterSet<Scalar>& params, const std::string& name, int channels, Rng& rng);
};

template <typename Scalar>
struct DenseAttentionTrace {
  Var<Scalar> fixed;      // F_fix, (L+1) x C_v, row 0 = sentence
  Var<Scalar> attention;  // F_sp, (H0*W0) x (L+1)
  Var<Scalar> attended;   // F_sl, (H0*W0) x C_v
};

template <typename Scalar>
struct DenseEmbeddings {
  Var<Scalar> map;  // (H0*W0) x C_v
};

template <typename Scalar>
struct DenseAttentionResult {
  DenseEmbeddings<Scalar> dense;
  DenseAttentionTrace<Scalar> trace;
};

template <typename Scalar>
DenseAttentionResult<Scalar> dense_attention(const Var<Scalar>& feat, const SparseEmbeddings<Scalar>& sparse,
                                             const DenseAttentionParams<Scalar>& params);

template <typename Scalar>
struct HierarchicalParams {
  DenseAttentionParams<Scalar> final_branch;
  std::array<Linear<Scalar>, 3> reduce;  // C_mid -> C_v
  std::array<DenseAttentionParams<Scalar>, 3> mid_branches;

  static HierarchicalParams make(ParameterSet<Scalar>& params, int mid_channels, int channels, Rng& rng);
};

template <typename Scalar>
struct HierarchicalResult {
  DenseEmbeddings<Scalar> dense;                       // final + mid0 + mid1 + mid2
  DenseAttentionResult<Scalar> final_branch;
  std::array<DenseAttentionResult<Scalar>, 3> mid_branches;
};

template <typename Scalar>
HierarchicalResult<Scalar> hierarchical_dense_attention(const FrameFeatures<Scalar>& features,
                                                        const SparseEmbeddings<Scalar>& sparse,
                                                        const HierarchicalParams<Scalar>& params);

#define REFVOS_DECLARE_FUSION(S)                                                                            \
  extern template struct CrossModalParams<S>;                                                               \
  extern template struct DenseAttentionParams<S>;                                                           \
  extern template struct HierarchicalParams<S>;                                                             \
  extern template SparseEmbeddings<S> cross_modal_project(const TextEmbeddings<S>&, const CrossModalParams<S>&); \
  extern template DenseAttentionResult<S> dense_attention(const Var<S>&, const SparseEmbeddings<S>&,        \
                                                          const DenseAttentionParams<S>&);                  \
  extern template HierarchicalResult<S> hierarchical_dense_attention(                                       \
      const FrameFeatures<S>&, const SparseEmbeddings<S>&, const HierarchicalParams<S>&);

REFVOS_DECLARE_FUSION(float)
REFVOS_DECLARE_FUSION(double)
#undef REFVOS_DECLARE_FUSION

}  // namespace refvos
