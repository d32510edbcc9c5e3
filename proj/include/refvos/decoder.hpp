// SPDX-License-Identifier: Apache-2.0
//
// Prompt-token mask decoder: a two-layer two-way transformer between output
// tokens (IoU, main mask, three scale masks, optional track token, text
// prompts) and the image embedding, followed by 4x upscaling and per-token
// hypernetworks that turn each mask token into a mask.
#pragma once

#include <array>
#include <optional>

#include "refvos/fusion.hpp"
#include "refvos/image.hpp"

namespace refvos {

inline constexpr int kOutputTokens = 5;  // IoU, main mask, 3 scale masks
inline constexpr int kMaskCount = 4;     // main + 3 scales

struct DecoderConfig {
  int layers = 2;
  int heads = 8;
  int mlp_width = 512;
  int attention_downsample = 2;
  int iou_hidden = 256;
  bool sentence_token = true;  // put the sentence embedding in the prompt tokens

  void validate(int channels) const;
};

template <typename Scalar>
struct TwoWayLayer {
  Attention<Scalar> self_attn;
  LayerNorm<Scalar> norm1;
  Attention<Scalar> token_to_image;
  LayerNorm<Scalar> norm2;
  Mlp<Scalar> mlp;
  LayerNorm<Scalar> norm3;
  Attention<Scalar> image_to_token;
  LayerNorm<Scalar> norm4;
};

template <typename Scalar>
struct Upscale {
  Var<Scalar> weight;  // C_in x 4*C_out
  Var<Scalar> bias;    // 1 x C_out
};

template <typename Scalar>
struct DecoderParams {
  Var<Scalar> output_tokens;  // 5 x C_v
  std::vector<TwoWayLayer<Scalar>> layers;
  Attention<Scalar> final_attn;
  LayerNorm<Scalar> final_norm;
  Upscale<Scalar> up1;  // C -> C/4
  LayerNorm<Scalar> up_norm;
  Upscale<Scalar> up2;  // C/4 -> C/8
  std::array<Mlp<Scalar>, kMaskCount> hyper;
  Mlp<Scalar> iou_head;
  // Maps the track token into the token sequence; zero-initialized and owned by
  // the tracking module's parameter group. Absent when tracking is disabled.
  std::optional<Linear<Scalar>> track_proj;

  static DecoderParams make(ParameterSet<Scalar>& params, const DecoderConfig& cfg, int channels, bool with_track,
                            Rng& rng);
};

template <typename Scalar>
struct DecoderOutput {
  std::array<Var<Scalar>, kMaskCount> masks;  // logits, (4*H0) x (4*W0); index 0 is the main mask
  Var<Scalar> iou_scores;                     // 1 x 4, in [0, 1]
  Var<Scalar> main_token;                     // E_m, 1 x C_v
};

// visual and dense are pixel-major (grid_h*grid_w) x C_v. A null dense skips
// the additive conditioning; a null track runs without the track token.
template <typename Scalar>
DecoderOutput<Scalar> decode(const Var<Scalar>& visual, int grid_h, int grid_w, const SparseEmbeddings<Scalar>& sparse,
                             const DenseEmbeddings<Scalar>* dense, const Var<Scalar>* track,
                             const DecoderParams<Scalar>& params, const DecoderConfig& cfg);

// Index of the highest IoU score; ties resolve to the lowest index.
template <typename Scalar>
int best_mask_index(const Matrix<Scalar>& scores);

// Highest-scoring mask binarized at logit 0.
template <typename Scalar>
Mask select_mask(const DecoderOutput<Scalar>& out);

template <typename Scalar>
Mask binarize(const Matrix<Scalar>& logits);

#define REFVOS_DECLARE_DECODER(S)                                                                              \
  extern template struct DecoderParams<S>;                                                                     \
  extern template DecoderOutput<S> decode(const Var<S>&, int, int, const SparseEmbeddings<S>&,                 \
                                          const DenseEmbeddings<S>*, const Var<S>*, const DecoderParams<S>&,   \
                                          const DecoderConfig&);                                               \
  extern template int best_mask_index(const Matrix<S>&);                                                       \
  extern template Mask select_mask(const DecoderOutput<S>&);                                                   \
  extern template Mask binarize(const Matrix<S>&);

REFVOS_DECLARE_DECODER(float)
REFVOS_DECLARE_DECODER(double)
#undef REFVOS_DECLARE_DECODER

}  // namespace refvos
