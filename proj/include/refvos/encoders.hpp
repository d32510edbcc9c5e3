// SPDX-License-Identifier: Apache-2.0
//
// Per-frame visual backbone: patch embedding, pre-norm transformer blocks
// (adapters in the latter half), three intermediate taps, and a neck that maps
// the final tokens to the decoder width.
#pragma once

#include <array>
#include <optional>
#include <vector>

#include "refvos/image.hpp"
#include "refvos/layers.hpp"

namespace refvos {

struct VisualEncoderConfig {
  int patch_size = 8;
  int blocks = 4;          // even
  int token_width = 64;    // also the width of the intermediate maps
  int heads = 4;
  int mlp_width = 128;
  int channels = 256;      // output width of the neck, shared with fusion and decoder
  int adapter_width = 16;  // bottleneck; must be < token_width
  // Token state after this many blocks (0 = patch embedding), strictly increasing, <= blocks.
  std::array<int, 3> taps = {1, 2, 3};
  bool adapters = true;

  int mid_channels() const { return token_width; }
  // Blocks [first_adapter_block(), blocks) carry two adapters each.
  int first_adapter_block() const { return blocks / 2; }
  void validate() const;

  // floor(B/4), floor(B/2), floor(3B/4); falls back to {B-2, B-1, B} when those collide.
  static std::array<int, 3> default_taps(int blocks);
};

template <typename Scalar>
struct AdapterParams {
  Linear<Scalar> down;  // D -> r
  Linear<Scalar> up;    // r -> D, zero-initialized
};

template <typename Scalar>
struct EncoderBlock {
  LayerNorm<Scalar> norm1;
  Attention<Scalar> attn;
  LayerNorm<Scalar> norm2;
  Mlp<Scalar> mlp;
  std::optional<AdapterParams<Scalar>> adapter1;  // after attention
  std::optional<AdapterParams<Scalar>> adapter2;  // after the MLP
};

template <typename Scalar>
struct EncoderParams {
  Linear<Scalar> patch_embed;  // 3*P*P -> D
  std::vector<EncoderBlock<Scalar>> blocks;
  Linear<Scalar> neck;  // D -> C_v
  LayerNorm<Scalar> neck_norm;

  static EncoderParams make(ParameterSet<Scalar>& params, const VisualEncoderConfig& cfg, Rng& rng);
};

// Pixel-major maps: final is (H0*W0) x C_v, each mid (H0*W0) x C_mid.
template <typename Scalar>
struct FrameFeatures {
  Var<Scalar> final_map;
  std::array<Var<Scalar>, 3> mids;
  int grid_h = 0;
  int grid_w = 0;
};

// tokens + Up(ReLU(Down(tokens)))
template <typename Scalar>
Var<Scalar> adapter_forward(const Var<Scalar>& tokens, const AdapterParams<Scalar>& adapter);

// (H0*W0) x (3*P*P) patch matrix, columns ordered (channel, row, col).
template <typename Scalar>
Matrix<Scalar> patchify(const Image& frame, int patch_size);

// use_adapters = false runs the same weights with every adapter skipped.
template <typename Scalar>
FrameFeatures<Scalar> encode_frame(const Image& frame, const VisualEncoderConfig& cfg,
                                   const EncoderParams<Scalar>& params, bool use_adapters = true);

extern template struct EncoderParams<float>;
extern template struct EncoderParams<double>;
extern template Var<float> adapter_forward(const Var<float>&, const AdapterParams<float>&);
extern template Var<double> adapter_forward(const Var<double>&, const AdapterParams<double>&);
extern template Matrix<float> patchify<float>(const Image&, int);
extern template Matrix<double> patchify<double>(const Image&, int);
extern template FrameFeatures<float> encode_frame(const Image&, const VisualEncoderConfig&,
                                                  const EncoderParams<float>&, bool);
extern template FrameFeatures<double> encode_frame(const Image&, const VisualEncoderConfig&,
                                                   const EncoderParams<double>&, bool);

}  // namespace refvos
