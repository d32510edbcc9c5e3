// SPDX-License-Identifier: Apache-2.0
//
// Region similarity J (mask IoU), contour accuracy F (boundary F-measure), and
// their mean J&F.
#pragma once

#include <vector>

#include "refvos/image.hpp"

namespace refvos {

struct Metrics {
  double J = 0.0;
  double F = 0.0;
  double JF = 0.0;
};

// |pred & gt| / |pred | gt|, 1 when both are empty.
double region_similarity(const Mask& pred, const Mask& gt);

// Foreground pixels with a 4-neighbour that is background or off-canvas.
Mask boundary_map(const Mask& mask);

// Exact squared Euclidean distance from every pixel to the nearest set pixel
// of `sites`. Pixels are unreachable (a large sentinel) when sites is empty.
std::vector<long long> squared_distance_transform(const Mask& sites);

// ceil(0.8% of the image diagonal).
double default_boundary_tolerance(int height, int width);

// Boundary F-measure: a boundary pixel counts as matched when the nearest
// boundary pixel of the other mask is within `tolerance_px` (Euclidean).
// Both boundaries empty gives 1, exactly one empty gives 0.
double contour_accuracy(const Mask& pred, const Mask& gt, double tolerance_px);

// Per-frame J and F averaged over the sequence. A negative tolerance selects
// the default for the frame size.
Metrics evaluate_sequence(const MaskSequence& preds, const MaskSequence& gts, double tolerance_px = -1.0);

// Mean of per-sequence metrics; JF recomputed as (J + F) / 2.
Metrics average_metrics(const std::vector<Metrics>& per_sequence);

}  // namespace refvos
