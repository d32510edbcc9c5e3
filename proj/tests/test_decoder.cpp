// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "refvos/decoder.hpp"
#include "refvos/errors.hpp"
#include "refvos/grad_check.hpp"
#include "refvos/losses.hpp"
#include "support.hpp"

using namespace refvos;
using refvos::test::random_matrix;
using M = Matrix<double>;
using V = Var<double>;

namespace {

V cst(const M& m) { return constant<double>(m); }

struct DecoderFixture {
  DecoderConfig cfg;
  int channels;
  ParameterSet<double> params;
  DecoderParams<double> dec;
  V visual;
  SparseEmbeddings<double> sparse;
  int grid = 2;

  DecoderFixture(std::uint64_t seed, bool randomize, bool with_track = true) {
    const auto mc = test::tiny_config();
    cfg = mc.decoder;
    channels = mc.channels();
    Rng rng(seed);
    dec = DecoderParams<double>::make(params, cfg, channels, with_track, rng);
    if (randomize) test::randomize_parameters(params, seed + 1, 0.2);
    visual = cst(random_matrix(grid * grid, channels, rng));
    sparse = {cst(random_matrix(2, channels, rng)), cst(random_matrix(1, channels, rng))};
  }

  DecoderOutput<double> run(const DenseEmbeddings<double>* dense = nullptr, const V* track = nullptr) const {
    return decode(visual, grid, grid, sparse, dense, track, dec, cfg);
  }
};

DecoderOutput<double> output_with(const M& scores, const std::array<M, kMaskCount>& masks) {
  DecoderOutput<double> out;
  for (int k = 0; k < kMaskCount; ++k) out.masks[static_cast<std::size_t>(k)] = cst(masks[static_cast<std::size_t>(k)]);
  out.iou_scores = cst(scores);
  return out;
}

}  // namespace

TEST_CASE("decoder output shapes") {
  DecoderConfig cfg;
  ParameterSet<float> params;
  Rng rng(1);
  const auto dec = DecoderParams<float>::make(params, cfg, 256, true, rng);
  Rng data(2);
  const Var<float> visual = constant<float>(random_matrix<float>(64, 256, data));
  const SparseEmbeddings<float> sparse{constant<float>(random_matrix<float>(3, 256, data)),
                                       constant<float>(random_matrix<float>(1, 256, data))};
  const auto out = decode<float>(visual, 8, 8, sparse, nullptr, nullptr, dec, cfg);
  for (const auto& m : out.masks) {
    CHECK(m.rows() == 32);
    CHECK(m.cols() == 32);
  }
  CHECK(out.iou_scores.rows() == 1);
  CHECK(out.iou_scores.cols() == 4);
  CHECK(out.iou_scores.value().minCoeff() >= 0.0f);
  CHECK(out.iou_scores.value().maxCoeff() <= 1.0f);
  CHECK(out.main_token.cols() == 256);
  CHECK_THROWS_AS(decode<float>(visual, 8, 7, sparse, nullptr, nullptr, dec, cfg), DimensionError);
}

TEST_CASE("decoder config validation") {
  DecoderConfig cfg;
  CHECK_NOTHROW(cfg.validate(256));
  CHECK_THROWS_AS(cfg.validate(20), ConfigError);
  cfg.heads = 3;
  CHECK_THROWS_AS(cfg.validate(256), ConfigError);
}

TEST_CASE("mask selection examples") {
  const M lo = M::Constant(2, 2, -1.0);
  M mixed = lo;
  mixed(0, 1) = 2.0;
  mixed(1, 0) = 0.5;
  const std::array<M, kMaskCount> masks{M::Constant(2, 2, 1.0), lo, mixed, lo};

  CHECK(best_mask_index<double>(M{{0.9, 0.1, 0.1, 0.1}}) == 0);
  CHECK(best_mask_index<double>(M{{0.4, 0.4, 0.4, 0.4}}) == 0);
  CHECK(best_mask_index<double>(M{{0.2, 0.3, 0.9, 0.1}}) == 2);

  const Mask chosen = select_mask(output_with(M{{0.2, 0.3, 0.9, 0.1}}, masks));
  CHECK(chosen.data == std::vector<std::uint8_t>{0, 1, 1, 0});
  CHECK(select_mask(output_with(M{{0.9, 0.1, 0.1, 0.1}}, masks)).area() == 4);
  // logit exactly 0 is background
  CHECK(binarize<double>(M{{0.0, 1e-12}}).data == std::vector<std::uint8_t>{0, 1});
}

TEST_CASE("mask selection is invariant under monotone score transforms") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    M s(1, 4);
    for (Index k = 0; k < 4; ++k) s(0, k) = rng.uniform();
    const int base = best_mask_index<double>(s);
    CHECK(best_mask_index<double>(M(s.array().exp())) == base);
    CHECK(best_mask_index<double>(M(s.array().cube())) == base);
    CHECK(best_mask_index<double>(M(3.0 * s.array() - 7.0)) == base);
  }
}

TEST_CASE("decode is deterministic and matches the frozen checksum") {
  const DecoderFixture a(11, true);
  const DecoderFixture b(11, true);
  const auto oa = a.run();
  const auto ob = b.run();
  for (int k = 0; k < kMaskCount; ++k) CHECK(oa.masks[k].value() == ob.masks[k].value());
  CHECK(oa.iou_scores.value() == ob.iou_scores.value());
  double total = 0.0;
  for (const auto& m : oa.masks) total += test::checksum(m.value());
  total += test::checksum(oa.iou_scores.value()) + test::checksum(oa.main_token.value());
  CHECK(total == doctest::Approx(198.70226187015922).epsilon(1e-9));
}

TEST_CASE("an all-zero dense map equals no dense conditioning") {
  const DecoderFixture f(12, true);
  const DenseEmbeddings<double> zero{cst(M::Zero(f.grid * f.grid, f.channels))};
  const auto with = f.run(&zero);
  const auto without = f.run();
  for (int k = 0; k < kMaskCount; ++k) CHECK(with.masks[k].value() == without.masks[k].value());
  CHECK(with.iou_scores.value() == without.iou_scores.value());

  Rng rng(13);
  const DenseEmbeddings<double> noisy{cst(random_matrix(f.grid * f.grid, f.channels, rng))};
  CHECK(f.run(&noisy).masks[0].value() != without.masks[0].value());
}

TEST_CASE("track token at initialization") {
  const DecoderFixture f(14, false);
  Rng rng(15);
  const V t1 = cst(random_matrix(1, f.channels, rng));
  const V t2 = cst(M::Zero(1, f.channels));
  const auto o1 = f.run(nullptr, &t1);
  const auto o2 = f.run(nullptr, &t2);
  // The injection map starts at zero, so the token value cannot matter yet.
  for (int k = 0; k < kMaskCount; ++k) CHECK(o1.masks[k].value() == o2.masks[k].value());
  // Presence still adds one attention slot.
  CHECK(f.run().masks[0].value() != o2.masks[0].value());

  const V narrow = cst(M::Zero(1, f.channels - 1));
  CHECK_THROWS_AS(f.run(nullptr, &narrow), DimensionError);
  const DecoderFixture untracked(14, false, false);
  CHECK_THROWS_AS(untracked.run(nullptr, &t1), ConfigError);
}

TEST_CASE("gradient of dice on the main mask through decode") {
  DecoderFixture f(16, true);
  Rng rng(17);
  const V visual = Var<double>(f.visual.value(), true);
  f.visual = visual;
  const V track = Var<double>(random_matrix(1, f.channels, rng), true);
  M target = M::Zero(4 * f.grid, 4 * f.grid);
  target.block(1, 2, 4, 3).setOnes();
  LossConfig loss_cfg;
  loss_cfg.dice_smooth = 1.0;
  auto loss = [&] { return dice_loss(sigmoid(f.run(nullptr, &track).masks[0]), target, loss_cfg); };
  std::vector<V> leaves{visual, track};
  for (const auto& p : f.params.all()) {
    p.var.node()->requires_grad = true;
    leaves.push_back(p.var);
  }
  const auto r = grad_check_leaves(loss, leaves, 1e-5, 4, 18);
  CHECK(r.checked > 100);
  CHECK(r.max_error < 1e-4);
}
