#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <random>

#include "oasalign/oas.hpp"
#include "oasalign/synth.hpp"
#include "test_helpers.hpp"

namespace oasalign {
namespace {

using testing::random_matrix;

// Sort-everything recomputation of the top-k mean.
double sorted_top_k_mean(std::vector<double> v, std::size_t k) {
  std::sort(v.begin(), v.end());
  std::reverse(v.begin(), v.end());
  k = std::min(k, v.size());
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += v[i];
  return s / static_cast<double>(k);
}

AttentionDump sliced_dump(std::size_t layers, std::size_t heads, const AlignmentMatrix& block,
                          const std::string& id) {
  AttentionDump d;
  d.manifest = {1, id, layers, heads,
                SequenceLayout{block.cols() + block.rows(), {0, block.cols()},
                               {block.cols(), block.cols() + block.rows()}},
                Dtype::f64, true};
  for (std::size_t l = 0; l < layers; ++l)
    for (std::size_t h = 0; h < heads; ++h) d.set(l, h, block);
  return d;
}

TEST(Oas, Fixtures) {
  EXPECT_EQ(oas(Matrix<double>::identity(3)), 1.0);
  EXPECT_EQ(oas(Matrix<double>(2, 2, 0.25)), 0.5);
}

TEST(Oas, BruteForceNumeratorOverDirectSum) {
  std::mt19937_64 rng(51);
  for (int n = 0; n < 50; ++n) {
    const auto a = random_matrix(5, 4, rng);
    double total = 0.0;
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 4; ++j) total += a(i, j);
    const double expected = path_score(a, brute_force_optimal_path(a)) / total;
    EXPECT_NEAR(oas(a), expected, 1e-14);
  }
}

TEST(Oas, AllZeroBlockIsAnError) {
  try {
    oas(Matrix<double>(3, 2, 0.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::degenerate_input);
  }
}

TEST(Oas, RangeAndScaleInvariance) {
  std::mt19937_64 rng(52);
  std::uniform_int_distribution<std::size_t> dim(1, 9);
  for (int n = 0; n < 1000; ++n) {
    const auto a = random_matrix(dim(rng), dim(rng), rng);
    const double v = oas(a);
    EXPECT_GT(v, 0.0);
    EXPECT_LE(v, 1.0);
    auto scaled = a;
    for (double& x : scaled.values()) x *= 3.5;
    EXPECT_NEAR(oas(scaled), v, 1e-12);
  }
}

TEST(Oas, OneOnlyWhenAllMassOnOnePath) {
  Matrix<double> a(4, 3, 0.0);
  a(0, 0) = 0.3;
  a(1, 1) = 0.9;
  a(2, 1) = 0.2;
  a(3, 2) = 0.6;
  EXPECT_DOUBLE_EQ(oas(a), 1.0);
  a(0, 2) = 0.01;  // off every path through the rest
  EXPECT_LT(oas(a), 1.0);
}

TEST(Oas, NoiseDegradesScore) {
  std::mt19937_64 rng(53);
  double previous = 2.0;
  for (double noise : {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}) {
    double acc = 0.0;
    for (int s = 0; s < 100; ++s) {
      auto path = draw_monotone_path(12, 5, PathStyle::random_monotone, rng);
      acc += oas(planted_alignment(path, noise));
    }
    const double mean = acc / 100.0;
    EXPECT_LT(mean, previous);
    previous = mean;
  }
}

TEST(PerHeadOas, SingleAlignedDumpGivesOnes) {
  const auto dump = sliced_dump(2, 3, Matrix<double>::identity(3), "u");
  const auto table = per_head_oas({dump});
  for (double v : table.values()) EXPECT_EQ(v, 1.0);
}

TEST(PerHeadOas, MeanOverDumps) {
  const Matrix<double> low{{0.4, 0.3, 0.3}};  // OAS 0.4
  const Matrix<double> high{{0.6, 0.2, 0.2}};  // OAS 0.6
  const auto table = per_head_oas({sliced_dump(1, 1, low, "a"), sliced_dump(1, 1, high, "b")});
  EXPECT_NEAR(table(0, 0), 0.5, 1e-15);
}

TEST(PerHeadOas, RejectsEmptyOrInconsistentCorpus) {
  EXPECT_THROW(per_head_oas({}), Error);
  const auto a = sliced_dump(1, 2, Matrix<double>::identity(2), "a");
  const auto b = sliced_dump(2, 2, Matrix<double>::identity(2), "b");
  try {
    per_head_oas({a, b});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::shape_mismatch);
  }
}

TEST(PerHeadOas, PlantedHeadAttainsMaximum) {
  SynthSpec spec;
  spec.n_layers = 4;
  spec.n_heads = 3;
  spec.planted_heads = {{2, 1}};
  std::vector<AttentionDump> dumps;
  for (std::uint64_t s = 0; s < 10; ++s) {
    spec.seed = s;
    spec.noise = 0.1 * static_cast<double>(s % 5);
    dumps.push_back(synth_dump(spec, "u" + std::to_string(s)).dump);
  }
  const auto table = per_head_oas(dumps, 3);
  EXPECT_EQ(best_head(table), (HeadKey{2, 1}));
}

TEST(PerHeadOas, ThreadCountDoesNotChangeResult) {
  SynthSpec spec;
  spec.n_layers = 3;
  spec.n_heads = 4;
  spec.planted_heads = {{1, 0}};
  std::vector<AttentionDump> dumps;
  for (std::size_t i = 0; i < 17; ++i) dumps.push_back(synth_corpus_utterance(spec, {}, i).utterance.dump);
  const auto serial = per_head_oas(dumps, 1);
  const auto threaded = per_head_oas(dumps, 5);
  EXPECT_EQ(serial, threaded);
}

TEST(LayerTopK, Basics) {
  OasTable t{{0.9, 0.5, 0.1}, {0.2, 0.4, 0.3}};
  EXPECT_EQ(layer_topk_mean(t, 1), (std::vector<double>{0.9, 0.4}));
  EXPECT_NEAR(layer_topk_mean(t, 2)[0], 0.7, 1e-15);
  EXPECT_NEAR(layer_topk_mean(t, 10)[1], 0.3, 1e-15);
  EXPECT_THROW(layer_topk_mean(OasTable{}, 2), Error);
  EXPECT_THROW(layer_topk_mean(t, 0), Error);
}

TEST(LayerTopK, MatchesSortOracleAndDominatesLayerMean) {
  std::mt19937_64 rng(54);
  for (int n = 0; n < 50; ++n) {
    const auto t = random_matrix(24, 14, rng);
    const auto got = layer_topk_mean(t, 7);
    for (std::size_t l = 0; l < 24; ++l) {
      auto row = t.row(l);
      std::vector<double> v(row.begin(), row.end());
      EXPECT_NEAR(got[l], sorted_top_k_mean(v, 7), 1e-15);
      EXPECT_GE(got[l], sorted_top_k_mean(v, 14));
    }
  }
}

TEST(FinalOas, Basics) {
  OasTable t{{0.8, 0.8, 0.1}, {0.8, 0.8, 0.8}};
  EXPECT_NEAR(final_oas(t, 5), 0.8, 1e-15);
  EXPECT_NEAR(final_oas(t, 6), (0.8 * 5 + 0.1) / 6.0, 1e-15);
  EXPECT_NEAR(final_oas(t, 60), (0.8 * 5 + 0.1) / 6.0, 1e-15);
}

TEST(FinalOas, MatchesFlattenSortOracle) {
  std::mt19937_64 rng(55);
  for (int n = 0; n < 50; ++n) {
    const auto t = random_matrix(24, 14, rng);
    std::vector<double> flat(t.values().begin(), t.values().end());
    EXPECT_NEAR(final_oas(t), sorted_top_k_mean(flat, 5), 1e-15);
  }
}

TEST(SelectHeads, FixedPolicyHalfOfLayersEightAndNine) {
  std::mt19937_64 rng(56);
  const auto t = random_matrix(24, 14, rng);
  const auto set = select_alignment_heads(t, FixedLayers{});
  ASSERT_EQ(set.heads.size(), 14u);
  std::size_t in8 = 0, in9 = 0;
  for (const auto& k : set.heads) (k.layer == 8 ? in8 : in9)++;
  EXPECT_EQ(in8, 7u);
  EXPECT_EQ(in9, 7u);
  // Each chosen head beats every unchosen head of its layer.
  for (std::size_t l : {8, 9}) {
    double worst_in = 1.0, best_out = 0.0;
    for (std::size_t h = 0; h < 14; ++h)
      (set.contains({l, h}) ? worst_in = std::min(worst_in, t(l, h))
                            : best_out = std::max(best_out, t(l, h)));
    EXPECT_GT(worst_in, best_out);
  }
  EXPECT_EQ(set.policy, "fixed(layers=8,9;per_layer=7)");
}

TEST(SelectHeads, TopOneIsArgmax) {
  std::mt19937_64 rng(57);
  const auto t = random_matrix(5, 6, rng);
  const auto it = std::max_element(t.values().begin(), t.values().end());
  const std::size_t flat = static_cast<std::size_t>(it - t.values().begin());
  const auto set = select_alignment_heads(t, TopOas{1});
  ASSERT_EQ(set.heads.size(), 1u);
  EXPECT_EQ(set.heads[0], (HeadKey{flat / 6, flat % 6}));
}

TEST(SelectHeads, TiesBreakByLayerThenHead) {
  OasTable t(3, 3, 0.5);
  const auto set = select_alignment_heads(t, TopOas{4});
  EXPECT_EQ(set.heads, (std::vector<HeadKey>{{0, 0}, {0, 1}, {0, 2}, {1, 0}}));
  const auto fixed = select_alignment_heads(t, FixedLayers{{2}, 2});
  EXPECT_EQ(fixed.heads, (std::vector<HeadKey>{{2, 0}, {2, 1}}));
}

TEST(SelectHeads, Errors) {
  OasTable t(4, 4, 0.5);
  EXPECT_THROW(select_alignment_heads(t, FixedLayers{{8, 9}, 2}), Error);
  EXPECT_THROW(select_alignment_heads(t, FixedLayers{{1}, 5}), Error);
  EXPECT_THROW(select_alignment_heads(t, TopOas{17}), Error);
  EXPECT_THROW(select_alignment_heads(t, TopOas{0}), Error);
}

TEST(SelectHeads, PoliciesAgreeOnPlantedTable) {
  std::mt19937_64 rng(58);
  auto t = random_matrix(24, 14, rng, 0.1, 0.4);
  for (std::size_t l : {8, 9})
    for (std::size_t h = 0; h < 7; ++h) t(l, 2 * h) = 0.8 + 0.01 * static_cast<double>(h);
  const auto fixed = select_alignment_heads(t, FixedLayers{});
  const auto top = select_alignment_heads(t, TopOas{14});
  EXPECT_EQ(fixed.heads, top.heads);
}

}  // namespace
}  // namespace oasalign
