// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "refvos/errors.hpp"
#include "refvos/fusion.hpp"
#include "refvos/grad_check.hpp"
#include "support.hpp"

using namespace refvos;
using refvos::test::random_matrix;
using M = Matrix<double>;
using V = Var<double>;

namespace {

V cst(const M& m) { return constant<double>(m); }

Linear<double> lin(const M& w, const M& b) { return {cst(w), cst(b)}; }

CrossModalParams<double> mlp_params(const M& w1, const M& b1, const M& w2, const M& b2) {
  CrossModalParams<double> p;
  p.mlp = Mlp<double>{{lin(w1, b1), lin(w2, b2)}};
  return p;
}

SparseEmbeddings<double> sparse_of(const M& sentence, const M& words) { return {cst(words), cst(sentence)}; }

}  // namespace

TEST_CASE("cross-modal projection shapes and zero input") {
  ParameterSet<double> params;
  Rng rng(1);
  const auto p = CrossModalParams<double>::make(params, 64, 256, 256, true, rng);
  Rng data(2);
  TextEmbeddings<double> text{cst(random_matrix(3, 64, data)), cst(random_matrix(1, 64, data))};
  const auto s = cross_modal_project(text, p);
  CHECK(s.words.rows() == 3);
  CHECK(s.words.cols() == 256);
  CHECK(s.sentence.rows() == 1);
  CHECK(s.sentence.cols() == 256);

  const auto zero_bias = mlp_params(random_matrix(4, 5, data), M::Zero(1, 5), random_matrix(5, 3, data), M::Zero(1, 3));
  const auto z = cross_modal_project(TextEmbeddings<double>{cst(M::Zero(2, 4)), cst(M::Zero(1, 4))}, zero_bias);
  CHECK(z.words.value() == M::Zero(2, 3));
  CHECK(z.sentence.value() == M::Zero(1, 3));

  CHECK_THROWS_AS(cross_modal_project(TextEmbeddings<double>{cst(M::Zero(2, 5)), cst(M::Zero(1, 5))}, zero_bias),
                  DimensionError);
}

TEST_CASE("cross-modal projection by hand") {
  // C_e = h = C_v = 2
  const auto p = mlp_params(M{{1, -1}, {2, 0}}, M{{0, 0.5}}, M{{1, 2}, {3, -1}}, M{{0.25, 0}});
  // word [1, 1]: hidden relu([3, -0.5]) = [3, 0]; out [3.25, 6]
  // sentence [0, 2]: hidden relu([4, 0.5]) = [4, 0.5]; out [5.75, 7.5]
  const auto s = cross_modal_project(TextEmbeddings<double>{cst(M{{1, 1}}), cst(M{{0, 2}})}, p);
  CHECK(s.words.value() == M{{3.25, 6}});
  CHECK(s.sentence.value() == M{{5.75, 7.5}});

  CrossModalParams<double> linear_only;
  linear_only.linear_only = lin(M{{1, 2}, {3, 4}}, M{{0, 1}});
  CHECK(cross_modal_project(TextEmbeddings<double>{cst(M{{1, 1}}), cst(M{{1, 0}})}, linear_only).words.value() ==
        M{{4, 7}});
}

TEST_CASE("identical keys split attention evenly") {
  Rng rng(3);
  const M v = random_matrix(1, 4, rng);
  DenseAttentionParams<double> p{lin(random_matrix(8, 4, rng), random_matrix(1, 4, rng))};
  const auto r = dense_attention(cst(random_matrix(1, 4, rng)), sparse_of(v, v), p);
  CHECK(r.trace.attention.value()(0, 0) == 0.5);
  CHECK(r.trace.attention.value()(0, 1) == 0.5);
  CHECK(r.trace.fixed.value().row(0) == v);
}

TEST_CASE("dense attention matches the loop oracle") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const int h = 1 + static_cast<int>(rng.below(4));
    const int w = 1 + static_cast<int>(rng.below(4));
    const Index l = 1 + static_cast<Index>(rng.below(3));
    const Index c = 1 + static_cast<Index>(rng.below(8));
    const M x = random_matrix(h * w, c, rng), sentence = random_matrix(1, c, rng), words = random_matrix(l, c, rng);
    const M cw = random_matrix(2 * c, c, rng), cb = random_matrix(1, c, rng);
    const auto r = dense_attention(cst(x), sparse_of(sentence, words), DenseAttentionParams<double>{lin(cw, cb)});
    const M expected = test::dense_attention_oracle(x, sentence, words, cw, cb);
    CHECK((r.dense.map.value() - expected).cwiseAbs().maxCoeff() < 1e-9);
    const M& a = r.trace.attention.value();
    CHECK(a.rows() == h * w);
    CHECK(a.cols() == l + 1);
    for (Index p = 0; p < a.rows(); ++p) CHECK(std::abs(a.row(p).sum() - 1.0) < 1e-6);
    CHECK(a.minCoeff() >= 0.0);
  }
}

TEST_CASE("dense attention rejects channel mismatch") {
  Rng rng(5);
  DenseAttentionParams<double> p{lin(random_matrix(8, 4, rng), random_matrix(1, 4, rng))};
  CHECK_THROWS_AS(dense_attention(cst(M::Zero(4, 3)), sparse_of(M::Zero(1, 4), M::Zero(2, 4)), p), DimensionError);
  CHECK_THROWS_AS(dense_attention(cst(M::Zero(4, 4)), sparse_of(M::Zero(1, 4), M::Zero(2, 3)), p), DimensionError);
}

TEST_CASE("word order does not change the attended features") {
  Rng rng(6);
  const M x = random_matrix(4, 5, rng), sentence = random_matrix(1, 5, rng), words = random_matrix(3, 5, rng);
  M swapped = words;
  swapped.row(0).swap(swapped.row(2));
  DenseAttentionParams<double> p{lin(random_matrix(10, 5, rng), random_matrix(1, 5, rng))};
  const M a = dense_attention(cst(x), sparse_of(sentence, words), p).dense.map.value();
  const M b = dense_attention(cst(x), sparse_of(sentence, swapped), p).dense.map.value();
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
}

namespace {

struct HdaFixture {
  ParameterSet<double> params;
  HierarchicalParams<double> hda;
  FrameFeatures<double> features;
  SparseEmbeddings<double> sparse;

  explicit HdaFixture(std::uint64_t seed) {
    Rng rng(seed);
    hda = HierarchicalParams<double>::make(params, 6, 4, rng);
    test::randomize_parameters(params, seed + 1);
    features.grid_h = 2;
    features.grid_w = 3;
    features.final_map = cst(random_matrix(6, 4, rng));
    for (auto& m : features.mids) m = cst(random_matrix(6, 6, rng));
    sparse = sparse_of(random_matrix(1, 4, rng), random_matrix(2, 4, rng));
  }
};

}  // namespace

TEST_CASE("hierarchical fusion is the sum of its branches") {
  HdaFixture f(7);
  const auto r = hierarchical_dense_attention(f.features, f.sparse, f.hda);
  CHECK(r.dense.map.rows() == 6);
  CHECK(r.dense.map.cols() == 4);

  // Each branch recomputed on its own, summed in the same order.
  M total = dense_attention(f.features.final_map, f.sparse, f.hda.final_branch).dense.map.value();
  M mids = M::Zero(6, 4);
  for (std::size_t i = 0; i < 3; ++i) {
    const V reduced = conv1x1(f.features.mids[i], f.hda.reduce[i].weight, f.hda.reduce[i].bias);
    const M branch = dense_attention(reduced, f.sparse, f.hda.mid_branches[i]).dense.map.value();
    CHECK(branch == r.mid_branches[i].dense.map.value());
    total += branch;
    mids += branch;
  }
  CHECK(r.dense.map.value() == total);
  CHECK(r.final_branch.dense.map.value() == dense_attention(f.features.final_map, f.sparse, f.hda.final_branch).dense.map.value());
  CHECK(((r.dense.map.value() - r.final_branch.dense.map.value()) - mids).cwiseAbs().maxCoeff() < 1e-12);

  for (const auto* branch : {&r.final_branch, &r.mid_branches[0], &r.mid_branches[1], &r.mid_branches[2]}) {
    const M& a = branch->trace.attention.value();
    for (Index p = 0; p < a.rows(); ++p) CHECK(std::abs(a.row(p).sum() - 1.0) < 1e-6);
    CHECK(a.minCoeff() >= 0.0);
  }
}

TEST_CASE("hierarchical fusion golden checksum") {
  HdaFixture f(8);
  const auto r = hierarchical_dense_attention(f.features, f.sparse, f.hda);
  CHECK(test::checksum(r.dense.map.value()) == doctest::Approx(26.548815242492402).epsilon(1e-9));
}

TEST_CASE("gradient through projection and dense attention") {
  ParameterSet<double> params;
  Rng rng(9);
  const auto proj = CrossModalParams<double>::make(params, 3, 5, 4, true, rng);
  const auto da = DenseAttentionParams<double>::make(params, "fusion.da", 4, rng);
  test::randomize_parameters(params, 10);
  const V feat = cst(random_matrix(6, 4, rng));
  const V words = Var<double>(random_matrix(2, 3, rng), true);
  auto loss = [&] {
    TextEmbeddings<double> text{words, mean_rows(words)};
    return sum(dense_attention(feat, cross_modal_project(text, proj), da).dense.map);
  };
  std::vector<V> leaves{words};
  for (const auto& p : params.all()) {
    p.var.node()->requires_grad = true;
    leaves.push_back(p.var);
  }
  CHECK(grad_check_leaves(loss, leaves).max_error < 1e-4);
}
