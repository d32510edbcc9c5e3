// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "refvos/tensor.hpp"

namespace refvos {

struct LossConfig {
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double dice_smooth = 1.0;
  double w_dice = 5.0;
  double w_focal = 2.0;

  // Throws ConfigError unless every field is in range and one weight is positive.
  void validate() const;
};

// 1 - (2 sum(p t) + s) / (sum(p) + sum(t) + s). pred holds probabilities in
// [0, 1], target holds {0, 1}. Returns a 1x1 Var.
template <typename Scalar>
Var<Scalar> dice_loss(const Var<Scalar>& pred_prob, const Matrix<Scalar>& target, const LossConfig& cfg);

// Pixel mean of -alpha_t (1 - p_t)^gamma log p_t with p_t = sigmoid(logit) for
// positives and 1 - sigmoid(logit) for negatives. Computed in log space so
// saturated logits stay finite.
template <typename Scalar>
Var<Scalar> focal_loss(const Var<Scalar>& pred_logit, const Matrix<Scalar>& target, const LossConfig& cfg);

// Intersection over union of two {0,1} maps; 1 when both are empty.
template <typename Scalar>
Scalar binary_iou(const Matrix<Scalar>& a, const Matrix<Scalar>& b);

extern template Var<float> dice_loss(const Var<float>&, const Matrix<float>&, const LossConfig&);
extern template Var<double> dice_loss(const Var<double>&, const Matrix<double>&, const LossConfig&);
extern template Var<float> focal_loss(const Var<float>&, const Matrix<float>&, const LossConfig&);
extern template Var<double> focal_loss(const Var<double>&, const Matrix<double>&, const LossConfig&);
extern template float binary_iou(const Matrix<float>&, const Matrix<float>&);
extern template double binary_iou(const Matrix<double>&, const Matrix<double>&);

}  // namespace refvos
