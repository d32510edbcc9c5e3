// SPDX-License-Identifier: Apache-2.0
#include "refvos/decoder.hpp"

#include <string>

namespace refvos {

void DecoderConfig::validate(int channels) const {
  if (layers <= 0) throw ConfigError("decoder: layer count must be positive");
  if (channels % 8 != 0) throw ConfigError("decoder: channel width must be divisible by 8");
  if (attention_downsample <= 0 || channels % attention_downsample != 0) {
    throw ConfigError("decoder: attention downsample must divide the channel width");
  }
  if (heads <= 0 || channels % heads != 0 || (channels / attention_downsample) % heads != 0) {
    throw ConfigError("decoder: head count must divide the attention widths");
  }
  if (mlp_width <= 0 || iou_hidden <= 0) throw ConfigError("decoder: widths must be positive");
}

namespace {

template <typename Scalar>
Upscale<Scalar> make_upscale(ParameterSet<Scalar>& params, const std::string& name, int in, int out, Rng& rng) {
  Upscale<Scalar> up;
  up.weight = params.add(name + ".weight", ModuleTag::kDecoder,
                         {static_cast<std::uint32_t>(in), static_cast<std::uint32_t>(4 * out)}, Init::kXavier, rng);
  up.bias = params.add(name + ".bias", ModuleTag::kDecoder, {static_cast<std::uint32_t>(out)}, Init::kZeros, rng);
  return up;
}

}  // namespace

template <typename Scalar>
DecoderParams<Scalar> DecoderParams<Scalar>::make(ParameterSet<Scalar>& params, const DecoderConfig& cfg, int channels,
                                                  bool with_track, Rng& rng) {
  cfg.validate(channels);
  const auto tag = ModuleTag::kDecoder;
  const int c = channels;
  const int inner = c / cfg.attention_downsample;
  DecoderParams d;
  d.output_tokens = params.add("decoder.output_tokens", tag, {kOutputTokens, static_cast<std::uint32_t>(c)},
                               Init::kNormal, rng, 1.0);
  for (int i = 0; i < cfg.layers; ++i) {
    const std::string p = "decoder.layer" + std::to_string(i);
    TwoWayLayer<Scalar> layer;
    layer.self_attn = Attention<Scalar>::make(params, p + ".self_attn", tag, c, c, cfg.heads, rng);
    layer.norm1 = LayerNorm<Scalar>::make(params, p + ".norm1", tag, c, rng);
    layer.token_to_image = Attention<Scalar>::make(params, p + ".token_to_image", tag, c, inner, cfg.heads, rng);
    layer.norm2 = LayerNorm<Scalar>::make(params, p + ".norm2", tag, c, rng);
    layer.mlp = Mlp<Scalar>::make(params, p + ".mlp", tag, {c, cfg.mlp_width, c}, rng);
    layer.norm3 = LayerNorm<Scalar>::make(params, p + ".norm3", tag, c, rng);
    layer.image_to_token = Attention<Scalar>::make(params, p + ".image_to_token", tag, c, inner, cfg.heads, rng);
    layer.norm4 = LayerNorm<Scalar>::make(params, p + ".norm4", tag, c, rng);
    d.layers.push_back(std::move(layer));
  }
  d.final_attn = Attention<Scalar>::make(params, "decoder.final_attn", tag, c, inner, cfg.heads, rng);
  d.final_norm = LayerNorm<Scalar>::make(params, "decoder.final_norm", tag, c, rng);
  d.up1 = make_upscale(params, "decoder.upscale1", c, c / 4, rng);
  d.up_norm = LayerNorm<Scalar>::make(params, "decoder.upscale_norm", tag, c / 4, rng);
  d.up2 = make_upscale(params, "decoder.upscale2", c / 4, c / 8, rng);
  for (int k = 0; k < kMaskCount; ++k) {
    d.hyper[static_cast<std::size_t>(k)] =
        Mlp<Scalar>::make(params, "decoder.hyper" + std::to_string(k), tag, {c, c, c, c / 8}, rng);
  }
  d.iou_head = Mlp<Scalar>::make(params, "decoder.iou_head", tag, {c, cfg.iou_hidden, cfg.iou_hidden, kMaskCount}, rng);
  if (with_track) {
    d.track_proj = Linear<Scalar>::make(params, "itm.inject", ModuleTag::kTracking, c, c, rng, Init::kZeros);
  }
  return d;
}

template <typename Scalar>
DecoderOutput<Scalar> decode(const Var<Scalar>& visual, int grid_h, int grid_w, const SparseEmbeddings<Scalar>& sparse,
                             const DenseEmbeddings<Scalar>* dense, const Var<Scalar>* track,
                             const DecoderParams<Scalar>& params, const DecoderConfig& cfg) {
  const Index c = params.output_tokens.cols();
  const Index pixels = static_cast<Index>(grid_h) * grid_w;
  if (visual.rows() != pixels || visual.cols() != c) {
    throw DimensionError("decode: visual embedding is " + std::to_string(visual.rows()) + "x" +
                         std::to_string(visual.cols()) + ", expected " + std::to_string(pixels) + "x" +
                         std::to_string(c));
  }
  if (sparse.words.cols() != c || sparse.sentence.cols() != c) throw DimensionError("decode: prompt width mismatch");
  if (dense && (dense->map.rows() != pixels || dense->map.cols() != c)) {
    throw DimensionError("decode: dense embedding does not match the visual grid");
  }
  if (track && (track->rows() != 1 || track->cols() != c)) throw DimensionError("decode: track token width mismatch");
  if (track && !params.track_proj) throw ConfigError("decode: track token given but tracking is disabled");

  std::vector<Var<Scalar>> token_parts{params.output_tokens};
  if (track) token_parts.push_back((*params.track_proj)(*track));
  if (cfg.sentence_token) token_parts.push_back(sparse.sentence);
  token_parts.push_back(sparse.words);
  const Var<Scalar> tokens = concat_rows(token_parts);

  Var<Scalar> keys = dense ? add(visual, dense->map) : visual;
  keys = add(keys, constant(sinusoid_2d<Scalar>(grid_h, grid_w, static_cast<int>(c))));

  Var<Scalar> queries = tokens;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& layer = params.layers[i];
    if (i == 0) {
      queries = layer.self_attn(queries, queries, queries);
    } else {
      const Var<Scalar> q = add(queries, tokens);
      queries = add(queries, layer.self_attn(q, q, queries));
    }
    queries = layer.norm1(queries);
    queries = layer.norm2(add(queries, layer.token_to_image(add(queries, tokens), keys, keys)));
    queries = layer.norm3(add(queries, layer.mlp(queries)));
    const Var<Scalar> q = add(queries, tokens);
    keys = layer.norm4(add(keys, layer.image_to_token(keys, q, queries)));
  }
  queries = params.final_norm(add(queries, params.final_attn(add(queries, tokens), keys, keys)));

  Var<Scalar> up = transposed_conv_upscale(keys, grid_h, grid_w, params.up1.weight, params.up1.bias);
  up = gelu(params.up_norm(up));
  up = gelu(transposed_conv_upscale(up, 2 * grid_h, 2 * grid_w, params.up2.weight, params.up2.bias));

  std::vector<Var<Scalar>> kernels;
  for (int k = 0; k < kMaskCount; ++k) {
    kernels.push_back(params.hyper[static_cast<std::size_t>(k)](slice_rows(queries, 1 + k, 1)));
  }
  const Var<Scalar> all_masks = matmul_nt(up, concat_rows(kernels));  // (16*H0*W0) x 4

  DecoderOutput<Scalar> out;
  for (int k = 0; k < kMaskCount; ++k) {
    out.masks[static_cast<std::size_t>(k)] = reshape(slice_cols(all_masks, k, 1), 4 * grid_h, 4 * grid_w);
  }
  out.iou_scores = sigmoid(params.iou_head(slice_rows(queries, 0, 1)));
  out.main_token = slice_rows(queries, 1, 1);
  return out;
}

template <typename Scalar>
int best_mask_index(const Matrix<Scalar>& scores) {
  int best = 0;
  for (Index k = 1; k < scores.size(); ++k) {
    if (scores.data()[k] > scores.data()[best]) best = static_cast<int>(k);
  }
  return best;
}

template <typename Scalar>
Mask binarize(const Matrix<Scalar>& logits) {
  Mask mask(static_cast<int>(logits.rows()), static_cast<int>(logits.cols()));
  for (Index i = 0; i < logits.size(); ++i) mask.data[static_cast<std::size_t>(i)] = logits.data()[i] > Scalar(0) ? 1 : 0;
  return mask;
}

template <typename Scalar>
Mask select_mask(const DecoderOutput<Scalar>& out) {
  return binarize(out.masks[static_cast<std::size_t>(best_mask_index(out.iou_scores.value()))].value());
}

#define REFVOS_INSTANTIATE_DECODER(S)                                                                            \
  template struct DecoderParams<S>;                                                                              \
  template DecoderOutput<S> decode(const Var<S>&, int, int, const SparseEmbeddings<S>&, const DenseEmbeddings<S>*, \
                                   const Var<S>*, const DecoderParams<S>&, const DecoderConfig&);                \
  template int best_mask_index(const Matrix<S>&);                                                                \
  template Mask select_mask(const DecoderOutput<S>&);                                                            \
  template Mask binarize(const Matrix<S>&);

REFVOS_INSTANTIATE_DECODER(float)
REFVOS_INSTANTIATE_DECODER(double)

}  // namespace refvos
