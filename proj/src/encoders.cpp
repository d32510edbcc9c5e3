// SPDX-License-Identifier: Apache-2.0
#include "refvos/encoders.hpp"

#include <string>

namespace refvos {

std::array<int, 3> VisualEncoderConfig::default_taps(int blocks) {
  std::array<int, 3> taps = {blocks / 4, blocks / 2, (3 * blocks) / 4};
  if (taps[0] < taps[1] && taps[1] < taps[2]) return taps;
  return {blocks - 2, blocks - 1, blocks};
}

void VisualEncoderConfig::validate() const {
  if (patch_size <= 0) throw ConfigError("encoder: patch_size must be positive");
  if (blocks <= 0 || blocks % 2 != 0) throw ConfigError("encoder: block count must be positive and even");
  if (token_width <= 0 || heads <= 0 || token_width % heads != 0) {
    throw ConfigError("encoder: token_width must be a positive multiple of heads");
  }
  if (mlp_width <= 0 || channels <= 0) throw ConfigError("encoder: widths must be positive");
  if (adapter_width <= 0 || adapter_width >= token_width) {
    throw ConfigError("encoder: adapter width must lie in (0, token_width)");
  }
  for (std::size_t i = 0; i < taps.size(); ++i) {
    if (taps[i] < 0 || taps[i] > blocks) throw ConfigError("encoder: tap index outside [0, blocks]");
    if (i > 0 && taps[i] <= taps[i - 1]) throw ConfigError("encoder: tap indices must be strictly increasing");
  }
}

template <typename Scalar>
EncoderParams<Scalar> EncoderParams<Scalar>::make(ParameterSet<Scalar>& params, const VisualEncoderConfig& cfg,
                                                  Rng& rng) {
  cfg.validate();
  const auto tag = ModuleTag::kEncoder;
  const int d = cfg.token_width;
  EncoderParams enc;
  enc.patch_embed = Linear<Scalar>::make(params, "encoder.patch_embed", tag, 3 * cfg.patch_size * cfg.patch_size, d, rng);
  for (int b = 0; b < cfg.blocks; ++b) {
    const std::string prefix = "encoder.block" + std::to_string(b);
    EncoderBlock<Scalar> block;
    block.norm1 = LayerNorm<Scalar>::make(params, prefix + ".norm1", tag, d, rng);
    block.attn = Attention<Scalar>::make(params, prefix + ".attn", tag, d, d, cfg.heads, rng);
    block.norm2 = LayerNorm<Scalar>::make(params, prefix + ".norm2", tag, d, rng);
    block.mlp = Mlp<Scalar>::make(params, prefix + ".mlp", tag, {d, cfg.mlp_width, d}, rng);
    if (cfg.adapters && b >= cfg.first_adapter_block()) {
      for (int k = 1; k <= 2; ++k) {
        const std::string name = prefix + ".adapter" + std::to_string(k);
        AdapterParams<Scalar> adapter{
            Linear<Scalar>::make(params, name + ".down", ModuleTag::kAdapter, d, cfg.adapter_width, rng),
            Linear<Scalar>::make(params, name + ".up", ModuleTag::kAdapter, cfg.adapter_width, d, rng, Init::kZeros)};
        (k == 1 ? block.adapter1 : block.adapter2) = std::move(adapter);
      }
    }
    enc.blocks.push_back(std::move(block));
  }
  enc.neck = Linear<Scalar>::make(params, "encoder.neck", tag, d, cfg.channels, rng);
  enc.neck_norm = LayerNorm<Scalar>::make(params, "encoder.neck_norm", tag, cfg.channels, rng);
  return enc;
}

template <typename Scalar>
Var<Scalar> adapter_forward(const Var<Scalar>& tokens, const AdapterParams<Scalar>& adapter) {
  if (adapter.down.weight.cols() >= tokens.cols()) {
    throw DimensionError("adapter_forward: bottleneck must be narrower than the token width");
  }
  return add(tokens, adapter.up(relu(adapter.down(tokens))));
}

template <typename Scalar>
Matrix<Scalar> patchify(const Image& frame, int patch_size) {
  if (frame.height % patch_size != 0 || frame.width % patch_size != 0) {
    throw DimensionError("encode_frame: frame " + std::to_string(frame.height) + "x" + std::to_string(frame.width) +
                         " not divisible by patch size " + std::to_string(patch_size));
  }
  const int gh = frame.height / patch_size;
  const int gw = frame.width / patch_size;
  const int p = patch_size;
  Matrix<Scalar> patches(static_cast<Index>(gh) * gw, 3 * p * p);
  for (int py = 0; py < gh; ++py) {
    for (int px = 0; px < gw; ++px) {
      const Index row = static_cast<Index>(py) * gw + px;
      Index col = 0;
      for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < p; ++y) {
          for (int x = 0; x < p; ++x) {
            patches(row, col++) = static_cast<Scalar>(frame.at(c, py * p + y, px * p + x));
          }
        }
      }
    }
  }
  return patches;
}

template <typename Scalar>
FrameFeatures<Scalar> encode_frame(const Image& frame, const VisualEncoderConfig& cfg,
                                   const EncoderParams<Scalar>& params, bool use_adapters) {
  if (static_cast<int>(params.blocks.size()) != cfg.blocks) {
    throw DimensionError("encode_frame: parameter block count does not match config");
  }
  if (frame.data.size() != static_cast<std::size_t>(3) * frame.height * frame.width) {
    throw DimensionError("encode_frame: frame buffer size does not match its extents");
  }
  FrameFeatures<Scalar> out;
  out.grid_h = frame.height / cfg.patch_size;
  out.grid_w = frame.width / cfg.patch_size;
  const Var<Scalar> patches = constant(patchify<Scalar>(frame, cfg.patch_size));
  const Var<Scalar> pos = constant(sinusoid_2d<Scalar>(out.grid_h, out.grid_w, cfg.token_width));
  Var<Scalar> x = add(params.patch_embed(patches), pos);

  std::size_t next_tap = 0;
  const auto take_taps = [&](int state) {
    while (next_tap < cfg.taps.size() && cfg.taps[next_tap] == state) out.mids[next_tap++] = x;
  };
  take_taps(0);
  for (int b = 0; b < cfg.blocks; ++b) {
    const auto& block = params.blocks[static_cast<std::size_t>(b)];
    const Var<Scalar> h = block.norm1(x);
    x = add(x, block.attn(h, h, h));
    if (use_adapters && block.adapter1) x = adapter_forward(x, *block.adapter1);
    x = add(x, block.mlp(block.norm2(x)));
    if (use_adapters && block.adapter2) x = adapter_forward(x, *block.adapter2);
    take_taps(b + 1);
  }
  if (next_tap != cfg.taps.size()) throw ConfigError("encode_frame: unreachable tap index");
  out.final_map = params.neck_norm(conv1x1(x, params.neck.weight, params.neck.bias));
  return out;
}

template struct EncoderParams<float>;
template struct EncoderParams<double>;
template Var<float> adapter_forward(const Var<float>&, const AdapterParams<float>&);
template Var<double> adapter_forward(const Var<double>&, const AdapterParams<double>&);
template Matrix<float> patchify<float>(const Image&, int);
template Matrix<double> patchify<double>(const Image&, int);
template FrameFeatures<float> encode_frame(const Image&, const VisualEncoderConfig&, const EncoderParams<float>&, bool);
template FrameFeatures<double> encode_frame(const Image&, const VisualEncoderConfig&, const EncoderParams<double>&,
                                            bool);

}  // namespace refvos
