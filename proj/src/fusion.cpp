// SPDX-License-Identifier: Apache-2.0
#include "refvos/fusion.hpp"

#include <cmath>

namespace refvos {

template <typename Scalar>
CrossModalParams<Scalar> CrossModalParams<Scalar>::make(ParameterSet<Scalar>& params, int text_width, int hidden,
                                                        int channels, bool use_mlp, Rng& rng) {
  CrossModalParams out;
  if (use_mlp) {
    out.mlp = Mlp<Scalar>::make(params, "cross_modal.mlp", ModuleTag::kCrossModalMlp, {text_width, hidden, channels}, rng);
  } else {
    out.linear_only = Linear<Scalar>::make(params, "cross_modal.linear", ModuleTag::kCrossModalMlp, text_width, channels, rng);
  }
  return out;
}

template <typename Scalar>
SparseEmbeddings<Scalar> cross_modal_project(const TextEmbeddings<Scalar>& text, const CrossModalParams<Scalar>& params) {
  const Index expected = params.mlp ? params.mlp->layers.front().weight.rows() : params.linear_only->weight.rows();
  if (text.words.cols() != expected || text.sentence.cols() != expected) {
    throw DimensionError("cross_modal_project: text width " + std::to_string(text.words.cols()) +
                         " does not match projection input " + std::to_string(expected));
  }
  // Words and sentence share the map, so run them as one batch.
  const Var<Scalar> stacked = concat_rows<Scalar>({text.sentence, text.words});
  const Var<Scalar> projected = params.mlp ? (*params.mlp)(stacked) : (*params.linear_only)(stacked);
  SparseEmbeddings<Scalar> out;
  out.sentence = slice_rows(projected, 0, 1);
  out.words = slice_rows(projected, 1, text.words.rows());
  return out;
}

template <typename Scalar>
DenseAttentionParams<Scalar> DenseAttentionParams<Scalar>::make(ParameterSet<Scalar>& params, const std::string& name,
                                                                int channels, Rng& rng) {
  return DenseAttentionParams{Linear<Scalar>::make(params, name + ".conv", ModuleTag::kFusion, 2 * channels, channels, rng)};
}

template <typename Scalar>
DenseAttentionResult<Scalar> dense_attention(const Var<Scalar>& feat, const SparseEmbeddings<Scalar>& sparse,
                                             const DenseAttentionParams<Scalar>& params) {
  const Index channels = params.conv.weight.cols();
  if (feat.cols() != channels || sparse.words.cols() != channels || sparse.sentence.cols() != channels) {
    throw DimensionError("dense_attention: channel mismatch (feature " + std::to_string(feat.cols()) + ", prompt " +
                         std::to_string(sparse.words.cols()) + ", expected " + std::to_string(channels) + ")");
  }
  DenseAttentionResult<Scalar> out;
  auto& trace = out.trace;
  trace.fixed = concat_rows<Scalar>({sparse.sentence, sparse.words});
  const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(channels));
  trace.attention = softmax_rows(scale(matmul_nt(feat, trace.fixed), inv_sqrt));
  trace.attended = matmul(trace.attention, trace.fixed);
  out.dense.map = conv1x1(concat_cols<Scalar>({trace.attended, feat}), params.conv.weight, params.conv.bias);
  return out;
}

template <typename Scalar>
HierarchicalParams<Scalar> HierarchicalParams<Scalar>::make(ParameterSet<Scalar>& params, int mid_channels,
                                                            int channels, Rng& rng) {
  HierarchicalParams out;
  out.final_branch = DenseAttentionParams<Scalar>::make(params, "fusion.da_final", channels, rng);
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string idx = std::to_string(i);
    out.reduce[i] = Linear<Scalar>::make(params, "fusion.reduce" + idx, ModuleTag::kFusion, mid_channels, channels, rng);
    out.mid_branches[i] = DenseAttentionParams<Scalar>::make(params, "fusion.da_mid" + idx, channels, rng);
  }
  return out;
}

template <typename Scalar>
HierarchicalResult<Scalar> hierarchical_dense_attention(const FrameFeatures<Scalar>& features,
                                                        const SparseEmbeddings<Scalar>& sparse,
                                                        const HierarchicalParams<Scalar>& params) {
  HierarchicalResult<Scalar> out;
  out.final_branch = dense_attention(features.final_map, sparse, params.final_branch);
  Var<Scalar> total = out.final_branch.dense.map;
  for (std::size_t i = 0; i < 3; ++i) {
    const Var<Scalar> reduced = conv1x1(features.mids[i], params.reduce[i].weight, params.reduce[i].bias);
    out.mid_branches[i] = dense_attention(reduced, sparse, params.mid_branches[i]);
    total = add(total, out.mid_branches[i].dense.map);
  }
  out.dense.map = total;
  return out;
}

#define REFVOS_INSTANTIATE_FUSION(S)                                                                         \
  template struct CrossModalParams<S>;                                                                       \
  template struct DenseAttentionParams<S>;                                                                   \
  template struct HierarchicalParams<S>;                                                                     \
  template SparseEmbeddings<S> cross_modal_project(const TextEmbeddings<S>&, const CrossModalParams<S>&);    \
  template DenseAttentionResult<S> dense_attention(const Var<S>&, const SparseEmbeddings<S>&,                \
                                                   const DenseAttentionParams<S>&);                          \
  template HierarchicalResult<S> hierarchical_dense_attention(const FrameFeatures<S>&, const SparseEmbeddings<S>&, \
                                                              const HierarchicalParams<S>&);

REFVOS_INSTANTIATE_FUSION(float)
REFVOS_INSTANTIATE_FUSION(double)

}  // namespace refvos
