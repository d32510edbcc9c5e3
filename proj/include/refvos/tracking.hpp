// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "refvos/layers.hpp"

namespace refvos {

// Two feed-forward layers with a residual and a final layer norm:
//   E_track = LayerNorm(E_m + fc2(ReLU(fc1(E_m))))
// fc2 starts at zero, so an untrained module yields LayerNorm(E_m).
template <typename Scalar>
struct TrackerParams {
  Linear<Scalar> fc1;
  Linear<Scalar> fc2;
  LayerNorm<Scalar> norm;

  static TrackerParams make(ParameterSet<Scalar>& params, int channels, Rng& rng);
};

template <typename Scalar>
struct TrackToken {
  Var<Scalar> value;  // 1 x C_v
};

template <typename Scalar>
TrackToken<Scalar> track_update(const Var<Scalar>& main_token, const TrackerParams<Scalar>& params);

extern template struct TrackerParams<float>;
extern template struct TrackerParams<double>;
extern template TrackToken<float> track_update(const Var<float>&, const TrackerParams<float>&);
extern template TrackToken<double> track_update(const Var<double>&, const TrackerParams<double>&);

}  // namespace refvos
