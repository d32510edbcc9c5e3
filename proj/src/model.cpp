// SPDX-License-Identifier: Apache-2.0
#include "refvos/model.hpp"

namespace refvos {

void ModelConfig::validate() const {
  encoder.validate();
  decoder.validate(encoder.channels);
  if (text_width <= 0 || mlp_hidden <= 0) throw ConfigError("model: text width and MLP hidden width must be positive");
  if (max_words <= 0) throw ConfigError("model: max_words must be positive");
  if (text_hash_seed < 0) throw ConfigError("model: text_hash_seed must be >= 0");
  if (hierarchical && !dense_attention) throw ConfigError("model: hda requires da");
}

template <typename Scalar>
Model<Scalar>::Model(const ModelConfig& cfg, std::uint64_t seed, const EmbeddingTable* external_text) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const int c = cfg_.channels();
  encoder_ = EncoderParams<Scalar>::make(params_, cfg_.encoder, rng);
  if (external_text) {
    if (external_text->width != cfg_.text_width) {
      throw DimensionError("external embeddings have width " + std::to_string(external_text->width) +
                           ", model expects " + std::to_string(cfg_.text_width));
    }
    text_ = TextEncoder<Scalar>::external(*external_text);
  } else {
    text_ = TextEncoder<Scalar>::toy(params_, cfg_.text_vocab, cfg_.text_width,
                                     static_cast<std::uint64_t>(cfg_.text_hash_seed), rng);
  }
  cross_modal_ = CrossModalParams<Scalar>::make(params_, cfg_.text_width, cfg_.mlp_hidden, c, cfg_.cross_modal_mlp, rng);
  if (cfg_.hierarchical) {
    hierarchical_ = HierarchicalParams<Scalar>::make(params_, cfg_.encoder.mid_channels(), c, rng);
  } else if (cfg_.dense_attention) {
    single_branch_ = DenseAttentionParams<Scalar>::make(params_, "fusion.da_final", c, rng);
  }
  decoder_ = DecoderParams<Scalar>::make(params_, cfg_.decoder, c, cfg_.tracking, rng);
  if (cfg_.tracking) tracker_ = TrackerParams<Scalar>::make(params_, c, rng);

  const Partition partition = freeze_partition(params_);
  for (auto& p : params_.all()) p.var.set_requires_grad(partition.trainable.count(p.name) != 0);
}

template <typename Scalar>
TextEmbeddings<Scalar> Model<Scalar>::encode_text(const ReferringExpression& expr) const {
  expr.validate(static_cast<std::size_t>(cfg_.max_words));
  return refvos::encode_text(expr, text_);
}

template <typename Scalar>
SparseEmbeddings<Scalar> Model<Scalar>::prompt(const ReferringExpression& expr) const {
  return cross_modal_project(encode_text(expr), cross_modal_);
}

template <typename Scalar>
FrameResult<Scalar> Model<Scalar>::forward_frame(const Image& frame, const SparseEmbeddings<Scalar>& sparse,
                                                 const Var<Scalar>* track) const {
  FrameResult<Scalar> r;
  r.features = encode_frame(frame, cfg_.encoder, encoder_);
  if (hierarchical_) {
    r.hierarchical = hierarchical_dense_attention(r.features, sparse, *hierarchical_);
    r.dense = r.hierarchical->dense;
  } else if (single_branch_) {
    r.single_branch = dense_attention(r.features.final_map, sparse, *single_branch_);
    r.dense = r.single_branch->dense;
  }
  r.output = decode(r.features.final_map, r.features.grid_h, r.features.grid_w, sparse, r.dense ? &*r.dense : nullptr,
                    track, decoder_, cfg_.decoder);
  return r;
}

template <typename Scalar>
TrackToken<Scalar> Model<Scalar>::track(const Var<Scalar>& main_token) const {
  if (!tracker_) throw ConfigError("tracking module is disabled");
  return track_update(main_token, *tracker_);
}

template <typename Scalar>
MaskSequence segment_clip(const VideoClip& clip, const ReferringExpression& expr, const Model<Scalar>& model,
                          const SegmentOptions& options, ClipTrace<Scalar>* trace) {
  if (clip.empty()) throw DimensionError("segment_clip: empty clip");
  NoGradGuard no_grad;
  const SparseEmbeddings<Scalar> sparse = model.prompt(expr);
  const bool use_track = options.use_track && model.tracker().has_value();
  MaskSequence masks;
  std::optional<Var<Scalar>> track;
  for (const auto& frame : clip) {
    if (frame.height != clip.front().height || frame.width != clip.front().width) {
      throw DimensionError("segment_clip: frames differ in size");
    }
    const FrameResult<Scalar> r = model.forward_frame(frame, sparse, track ? &*track : nullptr);
    const int best = best_mask_index(r.output.iou_scores.value());
    const Var<Scalar> resized = bilinear_resize(r.output.masks[static_cast<std::size_t>(best)], frame.height, frame.width);
    masks.push_back(binarize(resized.value()));
    if (trace) {
      trace->logits.push_back(resized.value());
      trace->selected.push_back(best);
    }
    if (use_track) track = model.track(r.output.main_token).value;
  }
  return masks;
}

template <typename To, typename From>
void copy_parameters(const ParameterSet<From>& from, ParameterSet<To>& to) {
  for (auto& dst : to.all()) {
    const Parameter<From>* src = from.find(dst.name);
    if (!src) throw ConfigError("no source value for parameter " + dst.name);
    if (src->shape != dst.shape) throw DimensionError("shape mismatch for parameter " + dst.name);
    dst.var.mutable_value() = src->var.value().template cast<To>();
  }
}

template class Model<float>;
template class Model<double>;
template MaskSequence segment_clip(const VideoClip&, const ReferringExpression&, const Model<float>&,
                                   const SegmentOptions&, ClipTrace<float>*);
template MaskSequence segment_clip(const VideoClip&, const ReferringExpression&, const Model<double>&,
                                   const SegmentOptions&, ClipTrace<double>*);
template void copy_parameters(const ParameterSet<float>&, ParameterSet<double>&);
template void copy_parameters(const ParameterSet<double>&, ParameterSet<float>&);
template void copy_parameters(const ParameterSet<float>&, ParameterSet<float>&);
template void copy_parameters(const ParameterSet<double>&, ParameterSet<double>&);

}  // namespace refvos
