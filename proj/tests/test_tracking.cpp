// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <set>

#include "refvos/checkpoint.hpp"
#include "refvos/errors.hpp"
#include "refvos/training.hpp"
#include "support.hpp"

using namespace refvos;
using refvos::test::random_matrix;
using M = Matrix<double>;
using V = Var<double>;

namespace {

V cst(const M& m) { return constant<double>(m); }

std::map<std::string, M> snapshot(const ParameterSet<double>& params) {
  std::map<std::string, M> out;
  for (const auto& p : params.all()) out[p.name] = p.var.value();
  return out;
}

}  // namespace

TEST_CASE("track update examples") {
  ParameterSet<double> params;
  Rng rng(1);
  const auto itm = TrackerParams<double>::make(params, 8, rng);
  const V e = cst(random_matrix(1, 8, rng));
  CHECK(track_update(e, itm).value.value() == layer_norm(e, itm.norm.gamma, itm.norm.beta).value());
  CHECK(track_update(cst(M::Zero(1, 8)), itm).value.value() == M::Zero(1, 8));
  CHECK_THROWS_AS(track_update(cst(M::Zero(1, 7)), itm), DimensionError);

  // C_v = 4 by hand
  TrackerParams<double> p{
      Linear<double>{cst(M{{1, 0}, {0, 1}, {1, 1}, {0, -1}}), cst(M{{0, 0.5}})},
      Linear<double>{cst(M{{1, -1, 0, 2}, {0.5, 0, 1, 0}}), cst(M{{0, 0, 0.25, 0}})},
      LayerNorm<double>{cst(M{{1, 2, 1, 1}}), cst(M{{0, 0, 0, 0.5}})}};
  const M x{{1, -2, 0.5, 3}};
  // hidden = relu([1.5, -4]) = [1.5, 0]; residual = x + [1.5, -1.5, 0.25, 3]
  const M r{{2.5, -3.5, 0.75, 6}};
  const double mu = r.mean();
  const double var = (r.array() - mu).square().mean();
  const M expected = ((r.array() - mu) / std::sqrt(var + 1e-5)).matrix().cwiseProduct(M{{1, 2, 1, 1}}) + M{{0, 0, 0, 0.5}};
  CHECK((track_update(cst(x), p).value.value() - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("single-frame clips take the untracked path") {
  Model<double> model(test::tiny_config(), 3);
  test::randomize_parameters(model.parameters(), 4);
  Rng rng(5);
  const VideoClip clip = test::random_clip(1, 32, 32, rng);
  const auto expr = ReferringExpression::parse("the blue circle");
  ClipTrace<double> with, without;
  const auto a = segment_clip(clip, expr, model, {true}, &with);
  const auto b = segment_clip(clip, expr, model, {false}, &without);
  CHECK(a == b);
  CHECK(with.logits[0] == without.logits[0]);

  const auto r = model.forward_frame(clip[0], model.prompt(expr), nullptr);
  const int best = best_mask_index(r.output.iou_scores.value());
  CHECK(best == with.selected[0]);
  CHECK(bilinear_resize(r.output.masks[static_cast<std::size_t>(best)], 32, 32).value() == with.logits[0]);
}

TEST_CASE("online segmentation is deterministic and causal") {
  Model<double> model(test::tiny_config(), 6);
  test::randomize_parameters(model.parameters(), 7);
  Rng rng(8);
  const VideoClip clip = test::random_clip(4, 32, 32, rng);
  const auto expr = ReferringExpression::parse("the green triangle");
  ClipTrace<double> full;
  const auto masks = segment_clip(clip, expr, model, {}, &full);
  CHECK(masks.size() == 4);
  CHECK(segment_clip(clip, expr, model) == masks);
  for (std::size_t t = 1; t <= 4; ++t) {
    ClipTrace<double> prefix;
    const auto part = segment_clip(VideoClip(clip.begin(), clip.begin() + static_cast<long>(t)), expr, model, {}, &prefix);
    for (std::size_t k = 0; k < t; ++k) {
      CHECK(part[k] == masks[k]);
      CHECK(prefix.logits[k] == full.logits[k]);
    }
  }
}

TEST_CASE("the track token changes later frames once ITM weights are nonzero") {
  Model<double> model(test::tiny_config(), 9);
  test::randomize_parameters(model.parameters(), 10);
  Rng rng(11);
  const VideoClip clip = test::random_clip(2, 32, 32, rng);
  const auto expr = ReferringExpression::parse("the red square");
  ClipTrace<double> tracked, untracked;
  segment_clip(clip, expr, model, {true}, &tracked);
  segment_clip(clip, expr, model, {false}, &untracked);
  CHECK(tracked.logits[0] == untracked.logits[0]);
  CHECK(tracked.logits[1] != untracked.logits[1]);

  // Frame 1 never sees ITM parameters.
  for (auto& p : model.parameters().all()) {
    if (p.tag == ModuleTag::kTracking) p.var.mutable_value().array() += 0.5;
  }
  ClipTrace<double> changed;
  segment_clip(clip, expr, model, {true}, &changed);
  CHECK(changed.logits[0] == tracked.logits[0]);
}

TEST_CASE("untrained ITM equals a plain layer norm of the main token") {
  Model<double> model(test::tiny_config(), 12);
  Rng rng(13);
  const V e = cst(random_matrix(1, model.config().channels(), rng));
  const auto& norm = model.tracker()->norm;
  CHECK(model.track(e).value.value() == layer_norm(e, norm.gamma, norm.beta).value());
}

TEST_CASE("frame sampling") {
  Rng rng(14);
  for (int trial = 0; trial < 50; ++trial) {
    const auto f = sample_frames(7, 3, rng);
    REQUIRE(f.size() == 3);
    CHECK(f[0] < f[1]);
    CHECK(f[1] < f[2]);
    CHECK(f[0] >= 0);
    CHECK(f[2] < 7);
  }
  CHECK(sample_frames(2, 3, rng) == std::vector<int>{0, 1});
}

TEST_CASE("a training step moves trainable groups only") {
  Model<double> model(test::tiny_config(), 15);
  TrainConfig cfg;
  cfg.optimizer.lr = {1e-3, 1e-3, 1e-3, 1e-3, 1e-3};
  AdamW<double> opt(model.parameters(), cfg.optimizer);
  Rng rng(16);
  const Sample s = test::random_sample("a", 4, 32, 32, rng);
  const auto before = snapshot(model.parameters());
  const LossReport report = train_step(model, opt, {&s}, cfg, rng);
  CHECK(std::isfinite(report.total));
  CHECK(report.total > 0.0);
  CHECK(opt.steps_taken() == 1);
  std::set<ModuleTag> moved;
  for (const auto& p : model.parameters().all()) {
    const bool same = p.var.value() == before.at(p.name);
    if (!is_trainable_tag(p.tag)) {
      CHECK_MESSAGE(same, p.name);
    } else if (!same) {
      moved.insert(p.tag);
    }
  }
  CHECK(moved == std::set<ModuleTag>{ModuleTag::kAdapter, ModuleTag::kCrossModalMlp, ModuleTag::kFusion,
                                     ModuleTag::kDecoder, ModuleTag::kTracking});
  CHECK(model.parameters().find("encoder.block1.adapter1.down.weight")->var.value() !=
        before.at("encoder.block1.adapter1.down.weight"));
}

TEST_CASE("optimizer learning rates per module") {
  Model<double> model(test::tiny_config(), 17);
  AdamW<double> opt(model.parameters(), OptimizerConfig{});
  const auto rates = opt.group_rates();
  CHECK(rates.at(ModuleTag::kCrossModalMlp) == 1e-4);
  CHECK(rates.at(ModuleTag::kFusion) == 1e-4);
  CHECK(rates.at(ModuleTag::kDecoder) == 1e-6);
  CHECK(rates.at(ModuleTag::kAdapter) == 1e-5);
  CHECK(rates.at(ModuleTag::kTracking) == 1e-4);
  CHECK(rates.count(ModuleTag::kEncoder) == 0);
  CHECK(rates.count(ModuleTag::kText) == 0);
  CHECK(opt.learning_rate("encoder.block1.adapter2.up.weight") == 1e-5);
  CHECK_THROWS_AS(opt.learning_rate("encoder.patch_embed.weight"), LookupError);
  CHECK_THROWS_AS(LearningRates{}.for_tag(ModuleTag::kEncoder), ConfigError);
}

TEST_CASE("AdamW first step by hand") {
  ParameterSet<double> params;
  Rng rng(18);
  V w = params.add("decoder.w", ModuleTag::kDecoder, {3}, Init::kZeros, rng);
  w.mutable_value() = M{{1.0, -2.0, 0.5}};
  w.set_requires_grad(true);
  OptimizerConfig cfg;
  cfg.lr.decoder = 0.1;
  cfg.weight_decay = 0.01;
  AdamW<double> opt(params, cfg);
  backward(sum(mul(w, cst(M{{2.0, -1.0, 0.0}}))));
  opt.step();
  // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps) after decay.
  const M g{{2.0, -1.0, 0.0}};
  M expected = M{{1.0, -2.0, 0.5}} * (1.0 - 0.1 * 0.01);
  for (Index i = 0; i < 3; ++i) expected(0, i) -= 0.1 * g(0, i) / (std::abs(g(0, i)) + 1e-8);
  CHECK((w.value() - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("frame-2 loss reaches frame-1 decoder state through the track token") {
  Model<double> model(test::tiny_config(), 19);
  test::randomize_parameters(model.parameters(), 20);
  Rng rng(21);
  const Sample s = test::random_sample("probe", 2, 32, 32, rng);
  const auto sparse = model.prompt(s.expression);
  const V e1 = model.forward_frame(s.frames[0], sparse, nullptr).output.main_token;
  M target(32, 32);
  for (Index i = 0; i < target.size(); ++i) target.data()[i] = s.masks[1].data[static_cast<std::size_t>(i)];
  LossConfig loss_cfg;

  // Loss of frame 2 as a function of the frame-1 main token.
  auto frame2_loss = [&](const V& main_token) {
    const V track = model.track(main_token).value;
    const V logits = bilinear_resize(model.forward_frame(s.frames[1], sparse, &track).output.masks[0], 32, 32);
    return dice_loss(sigmoid(logits), target, loss_cfg);
  };
  const V probe(e1.value(), true);
  backward(frame2_loss(probe));
  REQUIRE(probe.has_grad());

  const double eps = 1e-5;
  double largest = 0.0;
  for (Index k = 0; k < probe.cols(); ++k) {
    M plus = e1.value(), minus = e1.value();
    plus(0, k) += eps;
    minus(0, k) -= eps;
    const double fd = (frame2_loss(cst(plus)).item() - frame2_loss(cst(minus)).item()) / (2 * eps);
    CHECK(std::abs(fd - probe.grad()(0, k)) < 1e-6 * std::max(1.0, std::abs(fd)) + 1e-8);
    largest = std::max(largest, std::abs(fd));
  }
  CHECK(largest > 1e-6);
}

TEST_CASE("checkpoint round trip") {
  const auto dir = test::scratch_dir("checkpoint");
  auto cfg = test::tiny_config();
  cfg.encoder.taps = {0, 1, 2};
  cfg.hierarchical = true;
  Model<float> a(cfg, 22);
  test::randomize_parameters(a.parameters(), 23);
  save_checkpoint(dir / "m.ckpt", a);

  const auto records = read_checkpoint(dir / "m.ckpt");
  const ModelConfig back = checkpoint_model_config(records);
  CHECK(back.encoder.blocks == 2);
  CHECK(back.text_width == cfg.text_width);
  CHECK(back.decoder.heads == cfg.decoder.heads);
  Model<float> b(back, 99);
  load_parameters(records, b);
  for (const auto& p : a.parameters().all()) CHECK(b.parameters().find(p.name)->var.value() == p.var.value());
  CHECK(encode_checkpoint(checkpoint_records(b)) == read_file(dir / "m.ckpt"));
}

TEST_CASE("malformed checkpoints") {
  Model<float> model(test::tiny_config(), 24);
  const std::string good = encode_checkpoint(checkpoint_records(model));
  try {
    decode_checkpoint("REFSAM2\n" + good.substr(8));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 0);
  }
  CHECK_THROWS_AS(decode_checkpoint(good.substr(0, good.size() - 3)), ParseError);
  CHECK_THROWS_AS(decode_checkpoint(""), ParseError);

  auto records = checkpoint_records(model);
  auto missing = records;
  missing.pop_back();
  CHECK_THROWS_AS(load_parameters(missing, model), ParseError);
  auto reshaped = records;
  for (auto& r : reshaped) {
    if (r.name == "decoder.output_tokens") {
      r.shape = {r.shape[1], r.shape[0]};
    }
  }
  CHECK_THROWS_AS(load_parameters(reshaped, model), DimensionError);
  std::vector<CheckpointRecord> no_meta;
  for (const auto& r : records)
    if (r.name != "meta.config") no_meta.push_back(r);
  CHECK_THROWS_AS(checkpoint_model_config(no_meta), ParseError);
}
