// SPDX-License-Identifier: Apache-2.0
//
// Full referring segmentation model and the online per-clip inference loop.
#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "refvos/decoder.hpp"
#include "refvos/encoders.hpp"
#include "refvos/fusion.hpp"
#include "refvos/text.hpp"
#include "refvos/tracking.hpp"

namespace refvos {

struct ModelConfig {
  VisualEncoderConfig encoder;  // encoder.adapters is the adapter toggle
  int text_width = 64;
  int text_vocab = 4096;
  int text_hash_seed = 17;
  std::string text_embeddings;  // external embedding file; empty selects the toy table
  int max_words = 32;
  int mlp_hidden = 256;
  DecoderConfig decoder;

  bool cross_modal_mlp = true;
  bool dense_attention = true;
  bool hierarchical = true;  // requires dense_attention
  bool tracking = true;

  int channels() const { return encoder.channels; }
  void validate() const;
};

template <typename Scalar>
struct FrameResult {
  FrameFeatures<Scalar> features;
  std::optional<DenseEmbeddings<Scalar>> dense;
  std::optional<HierarchicalResult<Scalar>> hierarchical;
  std::optional<DenseAttentionResult<Scalar>> single_branch;
  DecoderOutput<Scalar> output;
};

template <typename Scalar>
class Model {
 public:
  // Parameters are drawn from `seed` in registration order. An external table
  // replaces the toy text provider (its width must equal text_width).
  Model(const ModelConfig& cfg, std::uint64_t seed, const EmbeddingTable* external_text = nullptr);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParameterSet<Scalar>& parameters() { return params_; }
  const ParameterSet<Scalar>& parameters() const { return params_; }

  const EncoderParams<Scalar>& encoder() const { return encoder_; }
  const TextEncoder<Scalar>& text_encoder() const { return text_; }
  const CrossModalParams<Scalar>& cross_modal() const { return cross_modal_; }
  const std::optional<HierarchicalParams<Scalar>>& hierarchical() const { return hierarchical_; }
  const std::optional<DenseAttentionParams<Scalar>>& single_branch() const { return single_branch_; }
  const DecoderParams<Scalar>& decoder() const { return decoder_; }
  const std::optional<TrackerParams<Scalar>>& tracker() const { return tracker_; }

  TextEmbeddings<Scalar> encode_text(const ReferringExpression& expr) const;
  SparseEmbeddings<Scalar> prompt(const ReferringExpression& expr) const;
  // Encode, fuse, and decode one frame. track may be null.
  FrameResult<Scalar> forward_frame(const Image& frame, const SparseEmbeddings<Scalar>& sparse,
                                    const Var<Scalar>* track) const;
  TrackToken<Scalar> track(const Var<Scalar>& main_token) const;

 private:
  ModelConfig cfg_;
  ParameterSet<Scalar> params_;
  EncoderParams<Scalar> encoder_;
  TextEncoder<Scalar> text_;
  CrossModalParams<Scalar> cross_modal_;
  std::optional<HierarchicalParams<Scalar>> hierarchical_;
  std::optional<DenseAttentionParams<Scalar>> single_branch_;
  DecoderParams<Scalar> decoder_;
  std::optional<TrackerParams<Scalar>> tracker_;
};

struct SegmentOptions {
  bool use_track = true;  // ignored when the model has no tracking module
};

// Per-frame resized logits of the selected mask, for inspection.
template <typename Scalar>
struct ClipTrace {
  std::vector<Matrix<Scalar>> logits;
  std::vector<int> selected;
};

// Online segmentation: text encoded once; frame 1 decodes without a track
// token, frame t > 1 with the track token built from frame t-1. The selected
// mask is resized to frame resolution and binarized at logit 0.
template <typename Scalar>
MaskSequence segment_clip(const VideoClip& clip, const ReferringExpression& expr, const Model<Scalar>& model,
                          const SegmentOptions& options = {}, ClipTrace<Scalar>* trace = nullptr);

// Copies values by name; throws DimensionError on a shape mismatch and
// ConfigError when a destination parameter has no source.
template <typename To, typename From>
void copy_parameters(const ParameterSet<From>& from, ParameterSet<To>& to);

extern template class Model<float>;
extern template class Model<double>;
extern template MaskSequence segment_clip(const VideoClip&, const ReferringExpression&, const Model<float>&,
                                          const SegmentOptions&, ClipTrace<float>*);
extern template MaskSequence segment_clip(const VideoClip&, const ReferringExpression&, const Model<double>&,
                                          const SegmentOptions&, ClipTrace<double>*);
extern template void copy_parameters(const ParameterSet<float>&, ParameterSet<double>&);
extern template void copy_parameters(const ParameterSet<double>&, ParameterSet<float>&);
extern template void copy_parameters(const ParameterSet<float>&, ParameterSet<float>&);
extern template void copy_parameters(const ParameterSet<double>&, ParameterSet<double>&);

}  // namespace refvos
