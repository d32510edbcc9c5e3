// SPDX-License-Identifier: Apache-2.0
#include "refvos/tracking.hpp"

namespace refvos {

template <typename Scalar>
TrackerParams<Scalar> TrackerParams<Scalar>::make(ParameterSet<Scalar>& params, int channels, Rng& rng) {
  const auto tag = ModuleTag::kTracking;
  TrackerParams t;
  t.fc1 = Linear<Scalar>::make(params, "itm.fc1", tag, channels, channels, rng);
  t.fc2 = Linear<Scalar>::make(params, "itm.fc2", tag, channels, channels, rng, Init::kZeros);
  t.norm = LayerNorm<Scalar>::make(params, "itm.norm", tag, channels, rng);
  return t;
}

template <typename Scalar>
TrackToken<Scalar> track_update(const Var<Scalar>& main_token, const TrackerParams<Scalar>& params) {
  if (main_token.rows() != 1 || main_token.cols() != params.fc1.weight.rows()) {
    throw DimensionError("track_update: main token width " + std::to_string(main_token.cols()) + " does not match " +
                         std::to_string(params.fc1.weight.rows()));
  }
  return {params.norm(add(main_token, params.fc2(relu(params.fc1(main_token)))))};
}

template struct TrackerParams<float>;
template struct TrackerParams<double>;
template TrackToken<float> track_update(const Var<float>&, const TrackerParams<float>&);
template TrackToken<double> track_update(const Var<double>&, const TrackerParams<double>&);

}  // namespace refvos
