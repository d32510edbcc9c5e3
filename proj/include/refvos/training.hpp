// SPDX-License-Identifier: Apache-2.0
//
// Multi-frame training with the track token carried across sampled frames,
// AdamW with per-module learning rates, and dataset-level evaluation.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "refvos/dataset.hpp"
#include "refvos/losses.hpp"
#include "refvos/metrics.hpp"
#include "refvos/model.hpp"

namespace refvos {

struct LearningRates {
  double cross_modal = 1e-4;
  double fusion = 1e-4;
  double decoder = 1e-6;
  double adapter = 1e-5;
  double tracking = 1e-4;

  // Throws ConfigError for frozen or untagged modules.
  double for_tag(ModuleTag tag) const;
  void validate() const;
};

struct OptimizerConfig {
  LearningRates lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;

  void validate() const;
};

struct TrainConfig {
  int frames = 3;  // N frames sampled per clip per step
  int steps = 500;
  int batch = 4;   // clips per step, cycled through the dataset in order
  std::uint64_t seed = 0;
  LossConfig loss;
  double iou_weight = 1.0;
  OptimizerConfig optimizer;
  bool detach_track = false;
  int checkpoint_every = 0;  // 0 writes only the final checkpoint

  void validate() const;
};

// Decoupled weight decay Adam over the trainable parameters of a set.
// Parameters without a gradient after backward are skipped for that step.
template <typename Scalar>
class AdamW {
 public:
  AdamW(ParameterSet<Scalar>& params, const OptimizerConfig& cfg);

  void step();
  int steps_taken() const { return t_; }

  // Learning rate assigned to a parameter; throws LookupError for a frozen or
  // unknown name.
  double learning_rate(const std::string& name) const;
  // Distinct learning rate per module tag among trainable parameters.
  std::map<ModuleTag, double> group_rates() const;

 private:
  struct Slot {
    std::size_t index;
    double lr;
    Matrix<Scalar> m;
    Matrix<Scalar> v;
  };
  ParameterSet<Scalar>* params_;
  OptimizerConfig cfg_;
  std::vector<Slot> slots_;
  std::map<std::string, std::size_t> by_name_;
  int t_ = 0;
};

struct LossReport {
  double dice = 0.0;   // summed over frames, averaged over clips
  double focal = 0.0;
  double iou = 0.0;
  double total = 0.0;  // w_dice * dice + w_focal * focal + iou_weight * iou
};

// N distinct frame indices from [0, T), sorted. N is capped at T.
std::vector<int> sample_frames(int clip_length, int n, Rng& rng);

template <typename Scalar>
struct ClipLoss {
  Var<Scalar> total;  // 1x1
  LossReport report;
};

// Forward over the given frames in order: no track token for the first, then
// the token built from the previous frame. Supervises the main mask resized
// to frame resolution and regresses the IoU score of that mask.
template <typename Scalar>
ClipLoss<Scalar> clip_loss(const Model<Scalar>& model, const Sample& sample, const std::vector<int>& frames,
                           const TrainConfig& cfg);

// One optimizer step over `batch` (each clip samples its own frames).
template <typename Scalar>
LossReport train_step(Model<Scalar>& model, AdamW<Scalar>& optimizer, const std::vector<const Sample*>& batch,
                      const TrainConfig& cfg, Rng& rng);

// Runs segment_clip on every sample with ground truth and averages J/F.
template <typename Scalar>
Metrics evaluate_model(const Model<Scalar>& model, const Dataset& data, double tolerance_px = -1.0,
                       const SegmentOptions& options = {});

std::string format_loss_line(int step, const LossReport& report);
std::string format_metrics(const Metrics& m);

#define REFVOS_DECLARE_TRAINING(S)                                                                                \
  extern template class AdamW<S>;                                                                                 \
  extern template ClipLoss<S> clip_loss(const Model<S>&, const Sample&, const std::vector<int>&, const TrainConfig&); \
  extern template LossReport train_step(Model<S>&, AdamW<S>&, const std::vector<const Sample*>&, const TrainConfig&, \
                                        Rng&);                                                                    \
  extern template Metrics evaluate_model(const Model<S>&, const Dataset&, double, const SegmentOptions&);

REFVOS_DECLARE_TRAINING(float)
REFVOS_DECLARE_TRAINING(double)
#undef REFVOS_DECLARE_TRAINING

}  // namespace refvos
