#include <gtest/gtest.h>

#include <map>
#include <random>

#include "oasalign/supervision.hpp"
#include "oasalign/synth.hpp"

namespace oasalign {
namespace {

const std::vector<TokenId> kTokens{101, 102, 103};
const DurationVector kDurations{2, 3, 3};
// Seed under which the sparse marking lands on offsets (0, 1, 1): [t1,M,M,t2,M,M,t3,M].
constexpr std::uint64_t kWorkedExampleSeed = 0;

TEST(FullRepeat, WorkedExample) {
  EXPECT_EQ(full_repeat_targets(kTokens, kDurations),
            (std::vector<TokenId>{101, 101, 102, 102, 102, 103, 103, 103}));
  EXPECT_EQ(full_repeat_targets({7}, {1}), (std::vector<TokenId>{7}));
  EXPECT_EQ(full_repeat_targets(kTokens, {0, 2, 0}), (std::vector<TokenId>{102, 102}));
  EXPECT_THROW(full_repeat_targets(kTokens, {1, 2}), Error);
  EXPECT_THROW(full_repeat_targets(kTokens, {0, 0, 0}), Error);
}

TEST(SparseRepeat, WorkedExampleUnderDesignatedSeed) {
  const auto o = sparse_repeat_targets(kTokens, kDurations, kWorkedExampleSeed);
  EXPECT_EQ(o.serialized(), (std::vector<TokenId>{101, -1, -1, 102, -1, -1, 103, -1}));
  EXPECT_EQ(o.valid(), (std::vector<bool>{true, false, false, true, false, false, true, false}));
}

TEST(SparseRepeat, SingleBlockOfThreeMarksTheMiddle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed)
    EXPECT_EQ(sparse_repeat_targets({5}, {3}, seed).serialized(), (std::vector<TokenId>{-1, 5, -1}));
}

TEST(SparseRepeat, Errors) {
  try {
    sparse_repeat_targets(kTokens, {2, 0, 3}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::zero_duration);
  }
  EXPECT_THROW(sparse_repeat_targets({}, {}, 1), Error);
  EXPECT_THROW(sparse_repeat_targets({-3}, {1}, 1), Error);
  const auto skipped = sparse_repeat_targets(kTokens, {2, 0, 3}, 1, ZeroDurations::skip);
  EXPECT_EQ(skipped.slots.size(), 5u);
}

TEST(SparseRepeat, InteriorOffsetsAreUniform) {
  std::map<std::size_t, int> counts;
  const int draws = 10000;
  for (int s = 0; s < draws; ++s) {
    const auto o = sparse_repeat_targets({9}, {4}, static_cast<std::uint64_t>(s));
    for (std::size_t k = 0; k < 4; ++k)
      if (o.slots[k]) counts[k]++;
  }
  EXPECT_EQ(counts.size(), 2u);
  EXPECT_NEAR(counts[1] / double(draws), 0.5, 0.02);
  EXPECT_NEAR(counts[2] / double(draws), 0.5, 0.02);
}

TEST(SparseRepeat, StructuralPropertiesOverSeeds) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> dur(1, 7), len(1, 9);
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const std::size_t n = len(rng);
    std::vector<TokenId> t(n);
    DurationVector d(n);
    for (std::size_t j = 0; j < n; ++j) t[j] = static_cast<TokenId>(j * 10 + 1), d[j] = dur(rng);
    const auto o = sparse_repeat_targets(t, d, seed);
    std::size_t start = 0;
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t marks = 0, offset = 0;
      for (std::size_t k = 0; k < d[j]; ++k)
        if (o.slots[start + k]) {
          ++marks;
          offset = k;
          EXPECT_EQ(*o.slots[start + k], t[j]);
        }
      EXPECT_EQ(marks, 1u);
      if (d[j] >= 3) {
        EXPECT_NE(offset, 0u);
        EXPECT_NE(offset, d[j] - 1);
      }
      start += d[j];
    }
    EXPECT_EQ(o.slots.size(), start);
    EXPECT_EQ(sparse_repeat_targets(t, d, seed).serialized(), o.serialized());
  }
}

TEST(ProgressValues, ExactRatios) {
  EXPECT_EQ(progress_values(kDurations), (std::vector<double>{0.25, 0.625, 1.0}));
  EXPECT_EQ(progress_values({5}), (std::vector<double>{1.0}));
  EXPECT_EQ(progress_values({1, 1}), (std::vector<double>{0.5, 1.0}));
  EXPECT_EQ(progress_values({0, 3, 0}), (std::vector<double>{0.0, 1.0, 1.0}));
  EXPECT_THROW(progress_values({0, 0}), Error);
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> dur(1, 50);
  for (int n = 0; n < 200; ++n) {
    DurationVector d(1 + n % 17);
    for (auto& x : d) x = dur(rng);
    EXPECT_EQ(progress_values(d).back(), 1.0);
  }
}

TEST(SparseProgress, WorkedExample) {
  const auto o_s = sparse_repeat_targets(kTokens, kDurations, kWorkedExampleSeed);
  const auto o_p = sparse_progress_targets(progress_values(kDurations), o_s);
  const std::vector<std::optional<double>> expected{0.25, std::nullopt, std::nullopt, 0.625,
                                                    std::nullopt, std::nullopt, 1.0, std::nullopt};
  EXPECT_EQ(o_p, expected);
  EXPECT_THROW(sparse_progress_targets({0.5, 1.0}, o_s), Error);
  const auto single = sparse_repeat_targets({4}, {1}, 0);
  EXPECT_EQ(sparse_progress_targets({1.0}, single), (std::vector<std::optional<double>>{1.0}));
}

TEST(SparseProgress, NonDecreasingOverSeeds) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> dur(1, 6), len(1, 12);
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    DurationVector d(len(rng));
    for (auto& x : d) x = dur(rng);
    std::vector<TokenId> t(d.size(), 1);
    const auto o_p = sparse_progress_targets(progress_values(d), sparse_repeat_targets(t, d, seed));
    double prev = 0.0;
    std::size_t present = 0;
    for (const auto& v : o_p) {
      if (!v) continue;
      ++present;
      EXPECT_GT(*v, 0.0);
      EXPECT_GE(*v, prev);
      prev = *v;
    }
    EXPECT_EQ(present, d.size());
    EXPECT_EQ(prev, 1.0);
  }
}

TEST(BuildSupervision, WorkedExampleChain) {
  const AlignmentPath path{{0, 0, 1, 1, 1, 2, 2, 2}, 3};
  const auto b = build_supervision(kTokens, path, kWorkedExampleSeed);
  EXPECT_EQ(b.durations, kDurations);
  EXPECT_EQ(b.o_w, (std::vector<TokenId>{101, 101, 102, 102, 102, 103, 103, 103}));
  EXPECT_EQ(b.o_s.serialized(), (std::vector<TokenId>{101, -1, -1, 102, -1, -1, 103, -1}));
  EXPECT_EQ(b.p, (std::vector<double>{0.25, 0.625, 1.0}));
  EXPECT_EQ(b.o_p[0], 0.25);
  EXPECT_EQ(b.o_p[3], 0.625);
  EXPECT_EQ(b.o_p[6], 1.0);
  EXPECT_TRUE(b.warnings.empty());
}

TEST(BuildSupervision, SingleCellMatrix) {
  const auto b = build_supervision({42}, Matrix<double>{{1.0}}, 3);
  EXPECT_EQ(b.durations, (DurationVector{1}));
  EXPECT_EQ(b.o_s.serialized(), (std::vector<TokenId>{42}));
  EXPECT_EQ(b.o_p, (std::vector<std::optional<double>>{1.0}));
}

TEST(BuildSupervision, ZeroDurationTokensAreWarnedAndSkipped) {
  const AlignmentPath path{{1, 1, 2}, 4};
  const auto b = build_supervision({1, 2, 3, 4}, path, 0);
  EXPECT_EQ(b.durations, (DurationVector{0, 2, 1, 0}));
  EXPECT_EQ(b.warnings.size(), 2u);
  EXPECT_EQ(b.o_w, (std::vector<TokenId>{2, 2, 3}));
  EXPECT_EQ(b.p, (std::vector<double>{0.0, 2.0 / 3.0, 1.0, 1.0}));
  std::size_t marks = 0;
  for (const auto& s : b.o_s.slots) marks += s.has_value();
  EXPECT_EQ(marks, 2u);
  EXPECT_THROW(build_supervision({1, 2, 3}, path, 0), Error);
}

TEST(BuildSupervision, PlantedTeacherDurationsRecovered) {
  SynthSpec spec;
  spec.speech_len = 40;
  spec.text_len = 12;
  spec.noise = 0.25;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    spec.seed = seed;
    const auto synth = synth_alignment_matrix(spec);
    std::vector<TokenId> t(12);
    for (std::size_t j = 0; j < 12; ++j) t[j] = static_cast<TokenId>(j);
    const auto b = build_supervision(t, synth.matrix, seed);
    EXPECT_EQ(b.durations, path_to_durations(synth.path));
  }
}

TEST(BuildSupervision, BlockBoundariesOfFullTargetsRecoverDurations) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::size_t> dur(1, 5);
  for (int n = 0; n < 100; ++n) {
    DurationVector d(6);
    std::vector<TokenId> t(6);
    for (std::size_t j = 0; j < 6; ++j) d[j] = dur(rng), t[j] = static_cast<TokenId>(j);
    const auto o_w = full_repeat_targets(t, d);
    DurationVector back(6, 0);
    for (TokenId id : o_w) back[static_cast<std::size_t>(id)]++;
    EXPECT_EQ(back, d);
  }
}

}  // namespace
}  // namespace oasalign
