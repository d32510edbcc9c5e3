// SPDX-License-Identifier: Apache-2.0
#include "refvos/losses.hpp"

#include <cmath>
#include <string>

#include "refvos/ops.hpp"

namespace refvos {

void LossConfig::validate() const {
  const auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(focal_alpha) || !(focal_alpha > 0.0 && focal_alpha < 1.0)) {
    throw ConfigError("focal_alpha must lie in (0, 1)");
  }
  if (!finite(focal_gamma) || focal_gamma < 0.0) throw ConfigError("focal_gamma must be >= 0");
  if (!finite(dice_smooth) || !(dice_smooth > 0.0)) throw ConfigError("dice_smooth must be > 0");
  if (!finite(w_dice) || !finite(w_focal) || w_dice < 0.0 || w_focal < 0.0) {
    throw ConfigError("loss weights must be finite and >= 0");
  }
  if (!(w_dice > 0.0 || w_focal > 0.0)) throw ConfigError("at least one loss weight must be > 0");
}

namespace {

template <typename Scalar>
void check_target(const char* op, Index rows, Index cols, const Matrix<Scalar>& target) {
  if (target.rows() != rows || target.cols() != cols) {
    throw DimensionError(std::string(op) + ": prediction and target shapes differ");
  }
  for (Index i = 0; i < target.size(); ++i) {
    const Scalar t = target.data()[i];
    if (t != Scalar(0) && t != Scalar(1)) throw DomainError(std::string(op) + ": target must be binary");
  }
}

// log(1 + exp(v)) without overflow.
template <typename Scalar>
Scalar softplus(Scalar v) {
  return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

}  // namespace

template <typename Scalar>
Var<Scalar> dice_loss(const Var<Scalar>& pred_prob, const Matrix<Scalar>& target, const LossConfig& cfg) {
  check_target("dice_loss", pred_prob.rows(), pred_prob.cols(), target);
  const auto& p = pred_prob.value();
  if ((p.array() < Scalar(0)).any() || (p.array() > Scalar(1)).any()) {
    throw DomainError("dice_loss: predicted probabilities must lie in [0, 1]");
  }
  const Scalar s = static_cast<Scalar>(cfg.dice_smooth);
  const Scalar num = Scalar(2) * p.cwiseProduct(target).sum() + s;
  const Scalar den = p.sum() + target.sum() + s;
  Matrix<Scalar> out(1, 1);
  out(0, 0) = Scalar(1) - num / den;
  return make_op<Scalar>("dice_loss", std::move(out), {pred_prob}, [target, num, den](Node<Scalar>& n) {
    // d/dp_i = (num - 2 t_i den) / den^2
    Matrix<Scalar> g = ((num - Scalar(2) * den * target.array()) / (den * den)).matrix();
    n.in(0)->accumulate(g * n.grad(0, 0));
  });
}

template <typename Scalar>
Var<Scalar> focal_loss(const Var<Scalar>& pred_logit, const Matrix<Scalar>& target, const LossConfig& cfg) {
  check_target("focal_loss", pred_logit.rows(), pred_logit.cols(), target);
  const Scalar alpha = static_cast<Scalar>(cfg.focal_alpha);
  const Scalar gamma = static_cast<Scalar>(cfg.focal_gamma);
  const auto& x = pred_logit.value();
  const Index n_px = x.size();
  Matrix<Scalar> dx(x.rows(), x.cols());
  Scalar total = 0;
  for (Index i = 0; i < n_px; ++i) {
    const Scalar logit = x.data()[i];
    const bool positive = target.data()[i] == Scalar(1);
    // z is the logit of the true class; p_t = sigmoid(z), q = 1 - p_t.
    const Scalar z = positive ? logit : -logit;
    const Scalar a = positive ? alpha : Scalar(1) - alpha;
    const Scalar log_pt = -softplus(-z);
    const Scalar log_q = -softplus(z);
    const Scalar pt = std::exp(log_pt);
    const Scalar q = std::exp(log_q);
    const Scalar q_gamma = gamma == Scalar(0) ? Scalar(1) : std::exp(gamma * log_q);
    total += -a * q_gamma * log_pt;
    // dL/dz = a q^gamma (gamma p_t log p_t - q); dz/dlogit = +-1.
    const Scalar dz = a * q_gamma * (gamma * pt * log_pt - q);
    dx.data()[i] = positive ? dz : -dz;
  }
  const Scalar inv_n = Scalar(1) / Scalar(n_px);
  Matrix<Scalar> out(1, 1);
  out(0, 0) = total * inv_n;
  dx *= inv_n;
  return make_op<Scalar>("focal_loss", std::move(out), {pred_logit},
                         [dx = std::move(dx)](Node<Scalar>& n) { n.in(0)->accumulate(dx * n.grad(0, 0)); });
}

template <typename Scalar>
Scalar binary_iou(const Matrix<Scalar>& a, const Matrix<Scalar>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("binary_iou: shapes differ");
  const Scalar inter = a.cwiseProduct(b).sum();
  const Scalar uni = a.sum() + b.sum() - inter;
  return uni == Scalar(0) ? Scalar(1) : inter / uni;
}

template Var<float> dice_loss(const Var<float>&, const Matrix<float>&, const LossConfig&);
template Var<double> dice_loss(const Var<double>&, const Matrix<double>&, const LossConfig&);
template Var<float> focal_loss(const Var<float>&, const Matrix<float>&, const LossConfig&);
template Var<double> focal_loss(const Var<double>&, const Matrix<double>&, const LossConfig&);
template float binary_iou(const Matrix<float>&, const Matrix<float>&);
template double binary_iou(const Matrix<double>&, const Matrix<double>&);

}  // namespace refvos
