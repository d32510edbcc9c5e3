// SPDX-License-Identifier: Apache-2.0
#include "refvos/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace refvos {

namespace {

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw DimensionError(std::string(op) + ": " + detail);
}

std::string dims(Index r, Index c) { return std::to_string(r) + "x" + std::to_string(c); }

template <typename Scalar>
void require_same_shape(const char* op, const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    shape_error(op, "shape mismatch " + dims(a.rows(), a.cols()) + " vs " + dims(b.rows(), b.cols()));
  }
}

template <typename Scalar>
void require_row(const char* op, const Var<Scalar>& b, Index cols) {
  if (b.rows() != 1 || b.cols() != cols) {
    shape_error(op, "expected 1x" + std::to_string(cols) + " row, got " + dims(b.rows(), b.cols()));
  }
}

}  // namespace

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape("add", a, b);
  return make_op<Scalar>("add", a.value() + b.value(), {a, b}, [](Node<Scalar>& n) {
    if (n.in(0)->requires_grad) n.in(0)->accumulate(n.grad);
    if (n.in(1)->requires_grad) n.in(1)->accumulate(n.grad);
  });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape("sub", a, b);
  return make_op<Scalar>("sub", a.value() - b.value(), {a, b}, [](Node<Scalar>& n) {
    if (n.in(0)->requires_grad) n.in(0)->accumulate(n.grad);
    if (n.in(1)->requires_grad) n.in(1)->accumulate(-n.grad);
  });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape("mul", a, b);
  return make_op<Scalar>("mul", a.value().cwiseProduct(b.value()), {a, b}, [](Node<Scalar>& n) {
    if (n.in(0)->requires_grad) n.in(0)->accumulate(n.grad.cwiseProduct(n.in(1)->value));
    if (n.in(1)->requires_grad) n.in(1)->accumulate(n.grad.cwiseProduct(n.in(0)->value));
  });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar s) {
  return make_op<Scalar>("scale", a.value() * s, {a}, [s](Node<Scalar>& n) {
    n.in(0)->accumulate(n.grad * s);
  });
}

template <typename Scalar>
Var<Scalar> add_row(const Var<Scalar>& x, const Var<Scalar>& b) {
  require_row("add_row", b, x.cols());
  Matrix<Scalar> y = x.value().rowwise() + b.value().row(0);
  return make_op<Scalar>("add_row", std::move(y), {x, b}, [](Node<Scalar>& n) {
    if (n.in(0)->requires_grad) n.in(0)->accumulate(n.grad);
    if (n.in(1)->requires_grad) n.in(1)->accumulate(n.grad.colwise().sum());
  });
}

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.cols() != b.rows()) {
    shape_error("matmul", "inner extents differ " + dims(a.rows(), a.cols()) + " * " + dims(b.rows(), b.cols()));
  }
  Matrix<Scalar> y = a.value() * b.value();
  return make_op<Scalar>("matmul", std::move(y), {a, b}, [](Node<Scalar>& n) {
    if (n.in(0)->requires_grad) n.in(0)->accumulate(n.grad * n.in(1)->value.transpose());
    if (n.in(1)->requires_grad) n.in(1)->accumulate(n.in(0)->value.transpose() * n.grad);
  });
}

template <typename Scalar>
Var<Scalar> matmul_nt(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.cols() != b.cols()) {
    shape_error("matmul_nt", "inner extents differ " + dims(a.rows(), a.cols()) + " * (" +
                                 dims(b.rows(), b.cols()) + ")^T");
  }
  Matrix<Scalar> y = a.value() * b.value().transpose();
  return make_op<Scalar>("matmul_nt", std::move(y), {a, b}, [](Node<Scalar>& n) {
    if (n.in(0)->requires_grad) n.in(0)->accumulate(n.grad * n.in(1)->value);
    if (n.in(1)->requires_grad) n.in(1)->accumulate(n.grad.transpose() * n.in(0)->value);
  });
}

template <typename Scalar>
Var<Scalar> transpose(const Var<Scalar>& a) {
  Matrix<Scalar> y = a.value().transpose();
  return make_op<Scalar>("transpose", std::move(y), {a}, [](Node<Scalar>& n) {
    n.in(0)->accumulate(n.grad.transpose());
  });
}

template <typename Scalar>
Var<Scalar> linear(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias) {
  if (x.cols() != weight.rows()) {
    shape_error("linear", "input width " + std::to_string(x.cols()) + " does not match weight " +
                              dims(weight.rows(), weight.cols()));
  }
  require_row("linear", bias, weight.cols());
  Matrix<Scalar> y = x.value() * weight.value();
  y.rowwise() += bias.value().row(0);
  return make_op<Scalar>("linear", std::move(y), {x, weight, bias}, [](Node<Scalar>& n) {
    const auto& g = n.grad;
    if (n.in(0)->requires_grad) n.in(0)->accumulate(g * n.in(1)->value.transpose());
    if (n.in(1)->requires_grad) n.in(1)->accumulate(n.in(0)->value.transpose() * g);
    if (n.in(2)->requires_grad) n.in(2)->accumulate(g.colwise().sum());
  });
}

template <typename Scalar>
Var<Scalar> conv1x1(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias) {
  if (x.cols() != weight.rows()) {
    shape_error("conv1x1", std::to_string(x.cols()) + " input channels, weight expects " +
                               std::to_string(weight.rows()));
  }
  require_row("conv1x1", bias, weight.cols());
  // Plain per-pixel accumulation in input-channel order, so results do not
  // depend on how the matrix product is blocked.
  const auto& xv = x.value();
  const auto& wv = weight.value();
  Matrix<Scalar> y(xv.rows(), wv.cols());
  for (Index p = 0; p < xv.rows(); ++p) {
    for (Index o = 0; o < wv.cols(); ++o) {
      Scalar acc = 0;
      for (Index i = 0; i < xv.cols(); ++i) acc += xv(p, i) * wv(i, o);
      y(p, o) = acc + bias.value()(0, o);
    }
  }
  return make_op<Scalar>("conv1x1", std::move(y), {x, weight, bias}, [](Node<Scalar>& n) {
    const auto& g = n.grad;
    if (n.in(0)->requires_grad) n.in(0)->accumulate(g * n.in(1)->value.transpose());
    if (n.in(1)->requires_grad) n.in(1)->accumulate(n.in(0)->value.transpose() * g);
    if (n.in(2)->requires_grad) n.in(2)->accumulate(g.colwise().sum());
  });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x) {
  Matrix<Scalar> y = x.value().cwiseMax(Scalar(0));
  return make_op<Scalar>("relu", std::move(y), {x}, [](Node<Scalar>& n) {
    n.in(0)->accumulate(
        (n.in(0)->value.array() > Scalar(0)).select(n.grad.array(), Scalar(0)).matrix());
  });
}

template <typename Scalar>
Var<Scalar> gelu(const Var<Scalar>& x) {
  const Scalar inv_sqrt2 = Scalar(0.70710678118654752440);
  Matrix<Scalar> y = x.value().unaryExpr(
      [=](Scalar v) { return Scalar(0.5) * v * (Scalar(1) + std::erf(v * inv_sqrt2)); });
  return make_op<Scalar>("gelu", std::move(y), {x}, [inv_sqrt2](Node<Scalar>& n) {
    const Scalar inv_sqrt_2pi = Scalar(0.39894228040143267794);
    Matrix<Scalar> d = n.in(0)->value.unaryExpr([=](Scalar v) {
      return Scalar(0.5) * (Scalar(1) + std::erf(v * inv_sqrt2)) +
             v * inv_sqrt_2pi * std::exp(Scalar(-0.5) * v * v);
    });
    n.in(0)->accumulate(n.grad.cwiseProduct(d));
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  Matrix<Scalar> y = x.value().unaryExpr([](Scalar v) {
    if (v >= 0) return Scalar(1) / (Scalar(1) + std::exp(-v));
    const Scalar e = std::exp(v);
    return e / (Scalar(1) + e);
  });
  return make_op<Scalar>("sigmoid", std::move(y), {x}, [](Node<Scalar>& n) {
    const auto& s = n.value.array();
    n.in(0)->accumulate((n.grad.array() * s * (Scalar(1) - s)).matrix());
  });
}

template <typename Scalar>
Var<Scalar> layer_norm(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                       Scalar eps) {
  if (!(eps > 0)) throw DomainError("layer_norm: eps must be positive");
  require_row("layer_norm", gamma, x.cols());
  require_row("layer_norm", beta, x.cols());
  const Index cols = x.cols();
  Matrix<Scalar> xhat(x.rows(), cols);
  Matrix<Scalar> inv_std(x.rows(), 1);
  for (Index r = 0; r < x.rows(); ++r) {
    const auto row = x.value().row(r);
    const Scalar mu = row.mean();
    const Scalar var = (row.array() - mu).square().mean();
    inv_std(r, 0) = Scalar(1) / std::sqrt(var + eps);
    xhat.row(r) = (row.array() - mu) * inv_std(r, 0);
  }
  Matrix<Scalar> y = xhat.array().rowwise() * gamma.value().row(0).array();
  y.rowwise() += beta.value().row(0);
  return make_op<Scalar>(
      "layer_norm", std::move(y), {x, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<Scalar>& n) {
        const auto& g = n.grad;
        if (n.in(0)->requires_grad) {
          Matrix<Scalar> dxhat = g.array().rowwise() * n.in(1)->value.row(0).array();
          Matrix<Scalar> dx(g.rows(), g.cols());
          for (Index r = 0; r < g.rows(); ++r) {
            const Scalar m1 = dxhat.row(r).mean();
            const Scalar m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
            dx.row(r) = (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) * inv_std(r, 0);
          }
          n.in(0)->accumulate(dx);
        }
        if (n.in(1)->requires_grad) n.in(1)->accumulate(g.cwiseProduct(xhat).colwise().sum());
        if (n.in(2)->requires_grad) n.in(2)->accumulate(g.colwise().sum());
      });
}

template <typename Scalar>
Var<Scalar> softmax_rows(const Var<Scalar>& x) {
  Matrix<Scalar> y(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar m = x.value().row(r).maxCoeff();
    y.row(r) = (x.value().row(r).array() - m).exp();
    y.row(r) /= y.row(r).sum();
  }
  return make_op<Scalar>("softmax", std::move(y), {x}, [](Node<Scalar>& n) {
    const auto& y = n.value;
    Matrix<Scalar> dot = n.grad.cwiseProduct(y).rowwise().sum();
    Matrix<Scalar> dx = y.array() * (n.grad.array().colwise() - dot.col(0).array());
    n.in(0)->accumulate(dx);
  });
}

template <typename Scalar>
Var<Scalar> softmax(const Var<Scalar>& x, int axis) {
  if (axis == 1 || axis == -1) return softmax_rows(x);
  if (axis == 0) return transpose(softmax_rows(transpose(x)));
  shape_error("softmax", "axis " + std::to_string(axis) + " outside rank 2");
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  Matrix<Scalar> y(1, 1);
  y(0, 0) = x.value().sum();
  return make_op<Scalar>("sum", std::move(y), {x}, [](Node<Scalar>& n) {
    const auto& in = n.in(0)->value;
    n.in(0)->accumulate(Matrix<Scalar>::Constant(in.rows(), in.cols(), n.grad(0, 0)));
  });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x) {
  if (x.size() == 0) shape_error("mean", "empty input");
  return scale(sum(x), Scalar(1) / Scalar(x.size()));
}

template <typename Scalar>
Var<Scalar> mean_rows(const Var<Scalar>& x) {
  if (x.rows() == 0) shape_error("mean_rows", "no rows");
  const Scalar inv = Scalar(1) / Scalar(x.rows());
  Matrix<Scalar> y = x.value().colwise().sum() * inv;
  return make_op<Scalar>("mean_rows", std::move(y), {x}, [inv](Node<Scalar>& n) {
    const Index rows = n.in(0)->value.rows();
    n.in(0)->accumulate((n.grad * inv).replicate(rows, 1));
  });
}

template <typename Scalar>
Var<Scalar> slice_rows(const Var<Scalar>& x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.rows()) {
    shape_error("slice_rows", "range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                                  ") outside " + std::to_string(x.rows()) + " rows");
  }
  Matrix<Scalar> y = x.value().middleRows(start, count);
  return make_op<Scalar>("slice_rows", std::move(y), {x}, [start, count](Node<Scalar>& n) {
    auto& in = *n.in(0);
    if (in.grad.size() == 0) in.grad = Matrix<Scalar>::Zero(in.value.rows(), in.value.cols());
    in.grad.middleRows(start, count) += n.grad;
  });
}

template <typename Scalar>
Var<Scalar> slice_cols(const Var<Scalar>& x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) {
    shape_error("slice_cols", "range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                                  ") outside " + std::to_string(x.cols()) + " cols");
  }
  Matrix<Scalar> y = x.value().middleCols(start, count);
  return make_op<Scalar>("slice_cols", std::move(y), {x}, [start, count](Node<Scalar>& n) {
    auto& in = *n.in(0);
    if (in.grad.size() == 0) in.grad = Matrix<Scalar>::Zero(in.value.rows(), in.value.cols());
    in.grad.middleCols(start, count) += n.grad;
  });
}

template <typename Scalar>
Var<Scalar> concat_rows(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) shape_error("concat_rows", "no inputs");
  Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != parts.front().cols()) shape_error("concat_rows", "column counts differ");
    rows += p.rows();
  }
  Matrix<Scalar> y(rows, parts.front().cols());
  Index at = 0;
  for (const auto& p : parts) {
    y.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return make_op<Scalar>("concat_rows", std::move(y), parts, [](Node<Scalar>& n) {
    Index at = 0;
    for (auto& in : n.inputs) {
      const Index r = in->value.rows();
      if (in->requires_grad) in->accumulate(n.grad.middleRows(at, r));
      at += r;
    }
  });
}

template <typename Scalar>
Var<Scalar> concat_cols(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) shape_error("concat_cols", "no inputs");
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != parts.front().rows()) shape_error("concat_cols", "row counts differ");
    cols += p.cols();
  }
  Matrix<Scalar> y(parts.front().rows(), cols);
  Index at = 0;
  for (const auto& p : parts) {
    y.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make_op<Scalar>("concat_cols", std::move(y), parts, [](Node<Scalar>& n) {
    Index at = 0;
    for (auto& in : n.inputs) {
      const Index c = in->value.cols();
      if (in->requires_grad) in->accumulate(n.grad.middleCols(at, c));
      at += c;
    }
  });
}

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& x, Index rows, Index cols) {
  if (rows * cols != x.size()) {
    shape_error("reshape", "cannot view " + dims(x.rows(), x.cols()) + " as " + dims(rows, cols));
  }
  Matrix<Scalar> y = Eigen::Map<const Matrix<Scalar>>(x.value().data(), rows, cols);
  return make_op<Scalar>("reshape", std::move(y), {x}, [](Node<Scalar>& n) {
    const auto& in = n.in(0)->value;
    n.in(0)->accumulate(Eigen::Map<const Matrix<Scalar>>(n.grad.data(), in.rows(), in.cols()));
  });
}

template <typename Scalar>
Matrix<Scalar> bilinear_weights(Index in, Index out) {
  if (in <= 0 || out <= 0) shape_error("bilinear_resize", "extents must be positive");
  Matrix<Scalar> w = Matrix<Scalar>::Zero(out, in);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (Index o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    Index i0 = static_cast<Index>(src);
    if (i0 > in - 1) i0 = in - 1;
    const Index i1 = std::min<Index>(i0 + 1, in - 1);
    const double frac = src - static_cast<double>(i0);
    w(o, i0) += static_cast<Scalar>(1.0 - frac);
    w(o, i1) += static_cast<Scalar>(frac);
  }
  return w;
}

template <typename Scalar>
Var<Scalar> bilinear_resize(const Var<Scalar>& x, Index out_h, Index out_w) {
  Matrix<Scalar> ry = bilinear_weights<Scalar>(x.rows(), out_h);
  Matrix<Scalar> rx = bilinear_weights<Scalar>(x.cols(), out_w);
  Matrix<Scalar> y = ry * x.value() * rx.transpose();
  return make_op<Scalar>("bilinear_resize", std::move(y), {x},
                         [ry = std::move(ry), rx = std::move(rx)](Node<Scalar>& n) {
                           n.in(0)->accumulate(ry.transpose() * n.grad * rx);
                         });
}

template <typename Scalar>
Var<Scalar> transposed_conv_upscale(const Var<Scalar>& x, Index height, Index width,
                                    const Var<Scalar>& weight, const Var<Scalar>& bias) {
  const char* op = "transposed_conv_upscale";
  if (x.rows() != height * width) shape_error(op, "pixel count does not match height*width");
  if (weight.rows() != x.cols() || weight.cols() % 4 != 0) {
    shape_error(op, "weight " + dims(weight.rows(), weight.cols()) + " incompatible with " +
                        std::to_string(x.cols()) + " input channels");
  }
  const Index c_out = weight.cols() / 4;
  require_row(op, bias, c_out);
  const Matrix<Scalar> packed = x.value() * weight.value();
  const Index out_w = 2 * width;
  Matrix<Scalar> y(4 * height * width, c_out);
  for (Index py = 0; py < height; ++py) {
    for (Index px = 0; px < width; ++px) {
      const Index src = py * width + px;
      for (Index k = 0; k < 4; ++k) {
        const Index dst = (2 * py + k / 2) * out_w + 2 * px + k % 2;
        y.row(dst) = packed.row(src).segment(k * c_out, c_out) + bias.value().row(0);
      }
    }
  }
  return make_op<Scalar>(op, std::move(y), {x, weight, bias}, [height, width, c_out](Node<Scalar>& n) {
    const Index out_w = 2 * width;
    Matrix<Scalar> gpacked(height * width, 4 * c_out);
    for (Index py = 0; py < height; ++py) {
      for (Index px = 0; px < width; ++px) {
        const Index src = py * width + px;
        for (Index k = 0; k < 4; ++k) {
          const Index dst = (2 * py + k / 2) * out_w + 2 * px + k % 2;
          gpacked.row(src).segment(k * c_out, c_out) = n.grad.row(dst);
        }
      }
    }
    if (n.in(0)->requires_grad) n.in(0)->accumulate(gpacked * n.in(1)->value.transpose());
    if (n.in(1)->requires_grad) n.in(1)->accumulate(n.in(0)->value.transpose() * gpacked);
    if (n.in(2)->requires_grad) n.in(2)->accumulate(n.grad.colwise().sum());
  });
}

#define REFVOS_INSTANTIATE_OPS(S)                                                              \
  template Var<S> add(const Var<S>&, const Var<S>&);                                           \
  template Var<S> sub(const Var<S>&, const Var<S>&);                                           \
  template Var<S> mul(const Var<S>&, const Var<S>&);                                           \
  template Var<S> scale(const Var<S>&, S);                                                     \
  template Var<S> add_row(const Var<S>&, const Var<S>&);                                       \
  template Var<S> matmul(const Var<S>&, const Var<S>&);                                        \
  template Var<S> matmul_nt(const Var<S>&, const Var<S>&);                                     \
  template Var<S> transpose(const Var<S>&);                                                    \
  template Var<S> linear(const Var<S>&, const Var<S>&, const Var<S>&);                         \
  template Var<S> conv1x1(const Var<S>&, const Var<S>&, const Var<S>&);                        \
  template Var<S> relu(const Var<S>&);                                                         \
  template Var<S> gelu(const Var<S>&);                                                         \
  template Var<S> sigmoid(const Var<S>&);                                                      \
  template Var<S> layer_norm(const Var<S>&, const Var<S>&, const Var<S>&, S);                  \
  template Var<S> softmax(const Var<S>&, int);                                                 \
  template Var<S> softmax_rows(const Var<S>&);                                                 \
  template Var<S> sum(const Var<S>&);                                                          \
  template Var<S> mean(const Var<S>&);                                                         \
  template Var<S> mean_rows(const Var<S>&);                                                    \
  template Var<S> slice_rows(const Var<S>&, Index, Index);                                     \
  template Var<S> slice_cols(const Var<S>&, Index, Index);                                     \
  template Var<S> concat_rows(const std::vector<Var<S>>&);                                     \
  template Var<S> concat_cols(const std::vector<Var<S>>&);                                     \
  template Var<S> reshape(const Var<S>&, Index, Index);                                        \
  template Var<S> bilinear_resize(const Var<S>&, Index, Index);                                \
  template Var<S> transposed_conv_upscale(const Var<S>&, Index, Index, const Var<S>&, const Var<S>&); \
  template Matrix<S> bilinear_weights<S>(Index, Index);

REFVOS_INSTANTIATE_OPS(float)
REFVOS_INSTANTIATE_OPS(double)

}  // namespace refvos
