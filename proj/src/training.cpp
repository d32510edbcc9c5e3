// SPDX-License-Identifier: Apache-2.0
#include "refvos/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace refvos {

double LearningRates::for_tag(ModuleTag tag) const {
  switch (tag) {
    case ModuleTag::kCrossModalMlp: return cross_modal;
    case ModuleTag::kFusion: return fusion;
    case ModuleTag::kDecoder: return decoder;
    case ModuleTag::kAdapter: return adapter;
    case ModuleTag::kTracking: return tracking;
    default: break;
  }
  throw ConfigError("no learning rate for module " + std::string(tag_name(tag)));
}

void LearningRates::validate() const {
  for (double lr : {cross_modal, fusion, decoder, adapter, tracking}) {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rates must be finite and > 0");
  }
}

void OptimizerConfig::validate() const {
  lr.validate();
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("optimizer eps must be > 0");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight decay must be >= 0");
}

void TrainConfig::validate() const {
  if (frames < 1) throw ConfigError("train.frames must be >= 1");
  if (steps < 0) throw ConfigError("train.steps must be >= 0");
  if (batch < 1) throw ConfigError("train.batch must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
  if (!(iou_weight >= 0.0) || !std::isfinite(iou_weight)) throw ConfigError("train.iou_weight must be >= 0");
  loss.validate();
  optimizer.validate();
}

template <typename Scalar>
AdamW<Scalar>::AdamW(ParameterSet<Scalar>& params, const OptimizerConfig& cfg) : params_(&params), cfg_(cfg) {
  cfg_.validate();
  const auto& all = params.all();
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (!is_trainable_tag(all[i].tag)) continue;
    const auto& value = all[i].var.value();
    by_name_[all[i].name] = slots_.size();
    slots_.push_back({i, cfg_.lr.for_tag(all[i].tag), Matrix<Scalar>::Zero(value.rows(), value.cols()),
                      Matrix<Scalar>::Zero(value.rows(), value.cols())});
  }
}

template <typename Scalar>
void AdamW<Scalar>::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  const auto b1 = static_cast<Scalar>(cfg_.beta1);
  const auto b2 = static_cast<Scalar>(cfg_.beta2);
  for (auto& slot : slots_) {
    Parameter<Scalar>& p = params_->all()[slot.index];
    if (!p.var.has_grad()) continue;
    const Matrix<Scalar>& g = p.var.grad();
    slot.m = b1 * slot.m + (Scalar(1) - b1) * g;
    slot.v = b2 * slot.v + (Scalar(1) - b2) * g.cwiseProduct(g);
    Matrix<Scalar>& w = p.var.mutable_value();
    w *= static_cast<Scalar>(1.0 - slot.lr * cfg_.weight_decay);
    const auto step_size = static_cast<Scalar>(slot.lr / bc1);
    const auto denom_scale = static_cast<Scalar>(1.0 / std::sqrt(bc2));
    w.array() -= step_size * slot.m.array() /
                 ((slot.v.array().sqrt() * denom_scale) + static_cast<Scalar>(cfg_.eps));
    if (!w.allFinite()) throw NumericError("non-finite value in parameter " + p.name + " after optimizer step");
  }
}

template <typename Scalar>
double AdamW<Scalar>::learning_rate(const std::string& name) const {
  const auto it = by_name_.find(name);
  if (it == by_name_.end()) throw LookupError(name);
  return slots_[it->second].lr;
}

template <typename Scalar>
std::map<ModuleTag, double> AdamW<Scalar>::group_rates() const {
  std::map<ModuleTag, double> out;
  for (const auto& slot : slots_) out[params_->all()[slot.index].tag] = slot.lr;
  return out;
}

std::vector<int> sample_frames(int clip_length, int n, Rng& rng) {
  if (clip_length < 1 || n < 1) throw DomainError("sample_frames: clip length and count must be positive");
  std::vector<int> idx(static_cast<std::size_t>(clip_length));
  std::iota(idx.begin(), idx.end(), 0);
  const int k = std::min(n, clip_length);
  // Partial Fisher-Yates: the first k entries become a uniform k-subset.
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(clip_length - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

namespace {

template <typename Scalar>
Matrix<Scalar> mask_matrix(const Mask& m) {
  Matrix<Scalar> out(m.height, m.width);
  for (std::size_t i = 0; i < m.data.size(); ++i) out.data()[i] = m.data[i] ? Scalar(1) : Scalar(0);
  return out;
}

}  // namespace

template <typename Scalar>
ClipLoss<Scalar> clip_loss(const Model<Scalar>& model, const Sample& sample, const std::vector<int>& frames,
                           const TrainConfig& cfg) {
  if (sample.masks.size() != sample.frames.size()) {
    throw DimensionError("clip " + sample.id + " has no ground truth for every frame");
  }
  if (frames.empty()) throw DimensionError("clip_loss: no frames selected");
  const SparseEmbeddings<Scalar> sparse = model.prompt(sample.expression);
  const bool tracking = model.tracker().has_value();

  std::vector<Var<Scalar>> terms;
  ClipLoss<Scalar> out;
  std::optional<Var<Scalar>> track;
  for (int f : frames) {
    if (f < 0 || static_cast<std::size_t>(f) >= sample.frames.size()) throw DimensionError("clip_loss: frame index out of range");
    const Image& frame = sample.frames[static_cast<std::size_t>(f)];
    const Mask& gt = sample.masks[static_cast<std::size_t>(f)];
    if (gt.height != frame.height || gt.width != frame.width) throw DimensionError("clip_loss: mask and frame differ in size");

    const FrameResult<Scalar> r = model.forward_frame(frame, sparse, track ? &*track : nullptr);
    const Var<Scalar> logits = bilinear_resize(r.output.masks[0], frame.height, frame.width);
    const Matrix<Scalar> target = mask_matrix<Scalar>(gt);
    const Var<Scalar> dice = dice_loss(sigmoid(logits), target, cfg.loss);
    const Var<Scalar> focal = focal_loss(logits, target, cfg.loss);

    const Matrix<Scalar> predicted = mask_matrix<Scalar>(binarize(logits.value()));
    const Scalar actual_iou = binary_iou(predicted, target);
    const Var<Scalar> diff = sub(slice_cols(r.output.iou_scores, 0, 1), constant<Scalar>(Matrix<Scalar>::Constant(1, 1, actual_iou)));
    const Var<Scalar> iou = mul(diff, diff);

    terms.push_back(scale(dice, static_cast<Scalar>(cfg.loss.w_dice)));
    terms.push_back(scale(focal, static_cast<Scalar>(cfg.loss.w_focal)));
    terms.push_back(scale(iou, static_cast<Scalar>(cfg.iou_weight)));
    out.report.dice += static_cast<double>(dice.item());
    out.report.focal += static_cast<double>(focal.item());
    out.report.iou += static_cast<double>(iou.item());

    if (tracking) {
      Var<Scalar> next = model.track(r.output.main_token).value;
      if (cfg.detach_track) next = constant(next.value());
      track = next;
    }
  }
  out.total = sum(concat_rows(terms));
  out.report.total = static_cast<double>(out.total.item());
  return out;
}

template <typename Scalar>
LossReport train_step(Model<Scalar>& model, AdamW<Scalar>& optimizer, const std::vector<const Sample*>& batch,
                      const TrainConfig& cfg, Rng& rng) {
  if (batch.empty()) throw DimensionError("train_step: empty batch");
  model.parameters().zero_grad();
  LossReport report;
  const auto inv = static_cast<Scalar>(1.0 / static_cast<double>(batch.size()));
  for (const Sample* s : batch) {
    const std::vector<int> frames = sample_frames(static_cast<int>(s->frames.size()), cfg.frames, rng);
    const ClipLoss<Scalar> loss = clip_loss(model, *s, frames, cfg);
    backward(scale(loss.total, inv));
    report.dice += loss.report.dice;
    report.focal += loss.report.focal;
    report.iou += loss.report.iou;
    report.total += loss.report.total;
  }
  const double n = static_cast<double>(batch.size());
  report.dice /= n;
  report.focal /= n;
  report.iou /= n;
  report.total /= n;
  optimizer.step();
  return report;
}

template <typename Scalar>
Metrics evaluate_model(const Model<Scalar>& model, const Dataset& data, double tolerance_px,
                       const SegmentOptions& options) {
  std::vector<Metrics> per;
  for (const auto& s : data) {
    if (s.masks.empty()) continue;
    per.push_back(evaluate_sequence(segment_clip(s.frames, s.expression, model, options), s.masks, tolerance_px));
  }
  return average_metrics(per);
}

std::string format_loss_line(int step, const LossReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "step=%d dice=%.6f focal=%.6f iou=%.6f total=%.6f", step, r.dice, r.focal, r.iou,
                r.total);
  return buf;
}

std::string format_metrics(const Metrics& m) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "J=%.4f F=%.4f JF=%.4f", m.J, m.F, m.JF);
  return buf;
}

#define REFVOS_INSTANTIATE_TRAINING(S)                                                                          \
  template class AdamW<S>;                                                                                      \
  template ClipLoss<S> clip_loss(const Model<S>&, const Sample&, const std::vector<int>&, const TrainConfig&);  \
  template LossReport train_step(Model<S>&, AdamW<S>&, const std::vector<const Sample*>&, const TrainConfig&,   \
                                 Rng&);                                                                         \
  template Metrics evaluate_model(const Model<S>&, const Dataset&, double, const SegmentOptions&);

REFVOS_INSTANTIATE_TRAINING(float)
REFVOS_INSTANTIATE_TRAINING(double)

}  // namespace refvos
