// SPDX-License-Identifier: Apache-2.0
#include "refvos/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "refvos/errors.hpp"

namespace refvos {

namespace {

constexpr long long kFar = std::numeric_limits<long long>::max() / 4;

void check_same_shape(const Mask& a, const Mask& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    throw DimensionError(std::string(what) + ": masks are " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                         " and " + std::to_string(b.height) + "x" + std::to_string(b.width));
  }
}

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) over one line.
// f holds squared distances or kFar; result written back into d.
void edt_1d(const std::vector<long long>& f, std::vector<long long>& d, std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[static_cast<std::size_t>(q)] >= kFar) continue;
    const double fq = static_cast<double>(f[static_cast<std::size_t>(q)]) + static_cast<double>(q) * q;
    while (k >= 0) {
      const int p = v[static_cast<std::size_t>(k)];
      const double fp = static_cast<double>(f[static_cast<std::size_t>(p)]) + static_cast<double>(p) * p;
      const double s = (fq - fp) / (2.0 * (q - p));
      if (s <= z[static_cast<std::size_t>(k)]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    if (k == 0) {
      z[0] = -std::numeric_limits<double>::infinity();
    } else {
      const int p = v[static_cast<std::size_t>(k - 1)];
      const double fp = static_cast<double>(f[static_cast<std::size_t>(p)]) + static_cast<double>(p) * p;
      z[static_cast<std::size_t>(k)] = (fq - fp) / (2.0 * (q - p));
    }
  }
  if (k < 0) {
    std::fill(d.begin(), d.end(), kFar);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (j < k && z[static_cast<std::size_t>(j + 1)] < q) ++j;
    const long long p = v[static_cast<std::size_t>(j)];
    d[static_cast<std::size_t>(q)] = (q - p) * (q - p) + f[static_cast<std::size_t>(p)];
  }
}

// Fraction of `from` boundary pixels within tolerance of the other boundary.
double matched_fraction(const Mask& from, const std::vector<long long>& dist_to_other, double tol2) {
  std::size_t total = 0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < from.data.size(); ++i) {
    if (!from.data[i]) continue;
    ++total;
    if (static_cast<double>(dist_to_other[i]) <= tol2) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(total);
}

}  // namespace

double region_similarity(const Mask& pred, const Mask& gt) {
  check_same_shape(pred, gt, "region_similarity");
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    inter += (pred.data[i] && gt.data[i]) ? 1 : 0;
    uni += (pred.data[i] || gt.data[i]) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

Mask boundary_map(const Mask& mask) {
  Mask out(mask.height, mask.width);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(y, x)) continue;
      const bool edge = y == 0 || x == 0 || y == mask.height - 1 || x == mask.width - 1 || !mask.at(y - 1, x) ||
                        !mask.at(y + 1, x) || !mask.at(y, x - 1) || !mask.at(y, x + 1);
      out.at(y, x) = edge ? 1 : 0;
    }
  }
  return out;
}

std::vector<long long> squared_distance_transform(const Mask& sites) {
  const int h = sites.height;
  const int w = sites.width;
  std::vector<long long> grid(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = sites.data[i] ? 0 : kFar;

  const int n = std::max(h, w);
  std::vector<long long> f(static_cast<std::size_t>(n));
  std::vector<long long> d(static_cast<std::size_t>(n));
  std::vector<int> v(static_cast<std::size_t>(n));
  std::vector<double> z(static_cast<std::size_t>(n) + 1);

  f.resize(static_cast<std::size_t>(h));
  d.resize(static_cast<std::size_t>(h));
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[static_cast<std::size_t>(y)] = grid[static_cast<std::size_t>(y) * w + x];
    edt_1d(f, d, v, z);
    for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = d[static_cast<std::size_t>(y)];
  }
  f.resize(static_cast<std::size_t>(w));
  d.resize(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[static_cast<std::size_t>(x)] = grid[static_cast<std::size_t>(y) * w + x];
    edt_1d(f, d, v, z);
    for (int x = 0; x < w; ++x) grid[static_cast<std::size_t>(y) * w + x] = d[static_cast<std::size_t>(x)];
  }
  return grid;
}

double default_boundary_tolerance(int height, int width) {
  return std::ceil(0.008 * std::sqrt(static_cast<double>(height) * height + static_cast<double>(width) * width));
}

double contour_accuracy(const Mask& pred, const Mask& gt, double tolerance_px) {
  check_same_shape(pred, gt, "contour_accuracy");
  if (!(tolerance_px >= 0.0) || !std::isfinite(tolerance_px)) {
    throw DomainError("contour_accuracy: tolerance must be a finite value >= 0");
  }
  const Mask pb = boundary_map(pred);
  const Mask gb = boundary_map(gt);
  const bool p_empty = pb.area() == 0;
  const bool g_empty = gb.area() == 0;
  if (p_empty && g_empty) return 1.0;
  if (p_empty || g_empty) return 0.0;
  const double tol2 = tolerance_px * tolerance_px;
  const double precision = matched_fraction(pb, squared_distance_transform(gb), tol2);
  const double recall = matched_fraction(gb, squared_distance_transform(pb), tol2);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

Metrics evaluate_sequence(const MaskSequence& preds, const MaskSequence& gts, double tolerance_px) {
  if (preds.size() != gts.size()) {
    throw DimensionError("evaluate_sequence: " + std::to_string(preds.size()) + " predictions for " +
                         std::to_string(gts.size()) + " ground-truth frames");
  }
  if (preds.empty()) throw DimensionError("evaluate_sequence: empty sequence");
  Metrics m;
  for (std::size_t t = 0; t < preds.size(); ++t) {
    const double tol = tolerance_px < 0.0 ? default_boundary_tolerance(gts[t].height, gts[t].width) : tolerance_px;
    m.J += region_similarity(preds[t], gts[t]);
    m.F += contour_accuracy(preds[t], gts[t], tol);
  }
  m.J /= static_cast<double>(preds.size());
  m.F /= static_cast<double>(preds.size());
  m.JF = (m.J + m.F) / 2.0;
  return m;
}

Metrics average_metrics(const std::vector<Metrics>& per_sequence) {
  if (per_sequence.empty()) throw DimensionError("average_metrics: no sequences");
  Metrics m;
  for (const auto& s : per_sequence) {
    m.J += s.J;
    m.F += s.F;
  }
  m.J /= static_cast<double>(per_sequence.size());
  m.F /= static_cast<double>(per_sequence.size());
  m.JF = (m.J + m.F) / 2.0;
  return m;
}

}  // namespace refvos
