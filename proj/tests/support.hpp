// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures for the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "refvos/dataset.hpp"
#include "refvos/image.hpp"
#include "refvos/model.hpp"
#include "refvos/random.hpp"

namespace refvos::test {

template <typename Scalar = double>
Matrix<Scalar> random_matrix(Index rows, Index cols, Rng& rng, double scale = 1.0) {
  Matrix<Scalar> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(scale * rng.normal());
  return m;
}

inline Image random_image(int h, int w, Rng& rng) {
  Image img(h, w);
  for (auto& v : img.data) v = static_cast<float>(rng.uniform());
  return img;
}

inline VideoClip random_clip(int frames, int h, int w, Rng& rng) {
  VideoClip clip;
  for (int t = 0; t < frames; ++t) clip.push_back(random_image(h, w, rng));
  return clip;
}

// 2 blocks, 8x8 patches, C_v = 32: small enough for exhaustive checks.
inline ModelConfig tiny_config() {
  ModelConfig c;
  c.encoder.patch_size = 8;
  c.encoder.blocks = 2;
  c.encoder.token_width = 16;
  c.encoder.heads = 2;
  c.encoder.mlp_width = 32;
  c.encoder.channels = 32;
  c.encoder.adapter_width = 4;
  c.encoder.taps = VisualEncoderConfig::default_taps(2);
  c.text_width = 16;
  c.text_vocab = 256;
  c.mlp_hidden = 24;
  c.decoder.heads = 4;
  c.decoder.mlp_width = 32;
  c.decoder.iou_hidden = 16;
  return c;
}

// Overwrites every parameter with small seeded noise so zero-initialized
// paths (adapter Up, ITM fc2, track injection) carry signal.
template <typename Scalar>
void randomize_parameters(ParameterSet<Scalar>& params, std::uint64_t seed, double scale = 0.3) {
  Rng rng(seed);
  for (auto& p : params.all()) {
    auto& v = p.var.mutable_value();
    for (Index i = 0; i < v.size(); ++i) v.data()[i] += static_cast<Scalar>(scale * rng.normal());
  }
}

// Order-sensitive checksum for golden regression values.
template <typename Scalar>
double checksum(const Matrix<Scalar>& m) {
  double s = 0.0;
  for (Index i = 0; i < m.size(); ++i) s += static_cast<double>(m.data()[i]) * (1.0 + 0.001 * static_cast<double>(i % 97));
  return s;
}

// Random frames with a drifting rectangle as ground truth.
inline Sample random_sample(const std::string& id, int frames, int h, int w, Rng& rng) {
  Sample s;
  s.id = id;
  s.frames = random_clip(frames, h, w, rng);
  for (int t = 0; t < frames; ++t) {
    Mask m(h, w);
    for (int y = h / 4; y < h / 2 + 2; ++y)
      for (int x = t + w / 4; x < t + w / 2; ++x) m.at(y, x) = 1;
    s.masks.push_back(m);
  }
  s.expression = ReferringExpression::parse("the red square moving right");
  return s;
}

// Dense attention by explicit loops over pixels, tokens and channels.
inline Matrix<double> dense_attention_oracle(const Matrix<double>& x, const Matrix<double>& sentence,
                                             const Matrix<double>& words, const Matrix<double>& w,
                                             const Matrix<double>& b) {
  const Index n = x.rows(), c = x.cols(), l = words.rows() + 1;
  auto token = [&](Index t, Index k) { return t == 0 ? sentence(0, k) : words(t - 1, k); };
  Matrix<double> out(n, c);
  for (Index p = 0; p < n; ++p) {
    std::vector<double> logits(static_cast<std::size_t>(l));
    double top = -1e300;
    for (Index t = 0; t < l; ++t) {
      double dot = 0.0;
      for (Index k = 0; k < c; ++k) dot += x(p, k) * token(t, k);
      logits[static_cast<std::size_t>(t)] = dot / std::sqrt(static_cast<double>(c));
      top = std::max(top, logits[static_cast<std::size_t>(t)]);
    }
    double z = 0.0;
    for (auto& v : logits) z += (v = std::exp(v - top));
    std::vector<double> cat(static_cast<std::size_t>(2 * c), 0.0);
    for (Index k = 0; k < c; ++k) {
      for (Index t = 0; t < l; ++t) cat[static_cast<std::size_t>(k)] += logits[static_cast<std::size_t>(t)] / z * token(t, k);
      cat[static_cast<std::size_t>(c + k)] = x(p, k);
    }
    for (Index o = 0; o < c; ++o) {
      double acc = b(0, o);
      for (Index i = 0; i < 2 * c; ++i) acc += cat[static_cast<std::size_t>(i)] * w(i, o);
      out(p, o) = acc;
    }
  }
  return out;
}

inline Mask random_mask(int h, int w, Rng& rng, double density) {
  Mask m(h, w);
  for (auto& v : m.data) v = rng.uniform() < density ? 1 : 0;
  return m;
}

inline double jaccard_oracle(const Mask& a, const Mask& b) {
  long inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    inter += a.data[i] && b.data[i];
    uni += a.data[i] || b.data[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Foreground pixel with a 4-neighbour that is background or off the canvas.
inline std::vector<std::pair<int, int>> boundary_oracle(const Mask& m) {
  std::vector<std::pair<int, int>> out;
  auto fg = [&](int y, int x) { return y >= 0 && x >= 0 && y < m.height && x < m.width && m.at(y, x); };
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (fg(y, x) && (!fg(y - 1, x) || !fg(y + 1, x) || !fg(y, x - 1) || !fg(y, x + 1))) out.emplace_back(y, x);
  return out;
}

// Boundary F-measure by comparing every pair of boundary pixels.
inline double contour_oracle(const Mask& pred, const Mask& gt, int tol) {
  const auto bp = boundary_oracle(pred), bg = boundary_oracle(gt);
  if (bp.empty() && bg.empty()) return 1.0;
  if (bp.empty() || bg.empty()) return 0.0;
  auto matched = [tol](const std::vector<std::pair<int, int>>& from, const std::vector<std::pair<int, int>>& to) {
    long hits = 0;
    for (const auto& [y, x] : from) {
      for (const auto& [v, u] : to) {
        if ((y - v) * (y - v) + (x - u) * (x - u) <= tol * tol) {
          ++hits;
          break;
        }
      }
    }
    return static_cast<double>(hits) / static_cast<double>(from.size());
  };
  const double precision = matched(bp, bg), recall = matched(bg, bp);
  return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("refvos_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace refvos::test
