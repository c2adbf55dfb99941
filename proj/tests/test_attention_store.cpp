#include <gtest/gtest.h>

#include <cstring>
#include <random>

#include "oasalign/attention_store.hpp"
#include "test_helpers.hpp"

namespace oasalign {
namespace {

using testing::random_row_stochastic;
using testing::slurp;
using testing::TempDir;

AttentionDump make_dump(std::size_t layers, std::size_t heads, SequenceLayout layout, Dtype dtype,
                        bool sliced, std::mt19937_64& rng) {
  AttentionDump d;
  d.manifest = {1, "utt", layers, heads, layout, dtype, sliced};
  for (std::size_t l = 0; l < layers; ++l)
    for (std::size_t h = 0; h < heads; ++h)
      d.set(l, h,
            random_row_stochastic(d.manifest.matrix_rows(), d.manifest.matrix_cols(), rng));
  return d;
}

const SequenceLayout kLayout{8, {0, 3}, {3, 8}};

TEST(SequenceLayout, RejectsOverlappingOrEmptySpans) {
  EXPECT_NO_THROW(kLayout.validate());
  EXPECT_THROW((SequenceLayout{8, {0, 4}, {3, 8}}.validate()), Error);
  EXPECT_THROW((SequenceLayout{8, {0, 0}, {3, 8}}.validate()), Error);
  EXPECT_THROW((SequenceLayout{7, {0, 3}, {3, 8}}.validate()), Error);
  EXPECT_THROW((SequenceLayout{8, {3, 5}, {0, 2}}.validate()), Error);
}

TEST(ExtractAlignment, TakesSpeechRowsAndTextColumns) {
  Matrix<double> full(5, 5);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) full(i, j) = 10.0 * i + j;
  const auto a = extract_alignment_submatrix(full, {5, {0, 2}, {2, 5}});
  ASSERT_EQ(a.rows(), 3u);
  ASSERT_EQ(a.cols(), 2u);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(a(i, j), full(i + 2, j));
}

TEST(ExtractAlignment, IdentityHasNoSpeechToTextMass) {
  const auto a = extract_alignment_submatrix(Matrix<double>::identity(5), {5, {0, 2}, {2, 5}});
  EXPECT_EQ(a, Matrix<double>(3, 2, 0.0));
}

TEST(ExtractAlignment, RowSumsEqualFullRowMinusComplement) {
  std::mt19937_64 rng(3);
  const auto full = random_row_stochastic(8, 8, rng);
  const SequenceLayout layout{8, {0, 3}, {3, 8}};
  const auto a = extract_alignment_submatrix(full, layout);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double block = 0.0, complement = 0.0, whole = 0.0;
    for (double v : a.row(i)) block += v;
    for (std::size_t j = 3; j < 8; ++j) complement += full(i + 3, j);
    for (double v : full.row(i + 3)) whole += v;
    EXPECT_LE(block, 1.0 + 1e-12);
    EXPECT_NEAR(block, whole - complement, 1e-12);
  }
}

TEST(ExtractAlignment, RejectsLayoutLargerThanMatrix) {
  EXPECT_THROW(extract_alignment_submatrix(Matrix<double>(5, 5), {6, {0, 2}, {2, 6}}), Error);
}

TEST(DumpIo, RoundTripIsBitExactForBothDtypes) {
  std::mt19937_64 rng(42);
  for (Dtype dtype : {Dtype::f32, Dtype::f64}) {
    for (bool sliced : {false, true}) {
      TempDir tmp("roundtrip");
      const auto dump = make_dump(2, 3, kLayout, dtype, sliced, rng);
      save_dump(dump, tmp.path());
      const auto back = load_dump(tmp.path());
      EXPECT_EQ(back.manifest, dump.manifest);
      ASSERT_EQ(back.matrices.size(), dump.matrices.size());
      for (const auto& [key, m] : dump.matrices) {
        const auto& other = back.matrices.at(key);
        ASSERT_EQ(other.size(), m.size());
        EXPECT_EQ(std::memcmp(other.values().data(), m.values().data(), m.size() * sizeof(double)),
                  0);
      }
    }
  }
}

TEST(DumpIo, SavingTwiceGivesIdenticalBytes) {
  std::mt19937_64 rng(5);
  const auto dump = make_dump(2, 2, kLayout, Dtype::f32, false, rng);
  TempDir a("det_a"), b("det_b");
  save_dump(dump, a.path());
  save_dump(dump, b.path());
  std::size_t files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(a.path())) {
    ++files;
    EXPECT_EQ(slurp(entry.path()), slurp(b.path() / entry.path().filename()));
  }
  EXPECT_EQ(files, 5u);
}

TEST(DumpIo, FileCountAndSizeFollowFormat) {
  AttentionDump d;
  d.manifest = {1, "big", 24, 14, SequenceLayout{64, {0, 16}, {16, 64}}, Dtype::f32, false};
  for (std::size_t l = 0; l < 24; ++l)
    for (std::size_t h = 0; h < 14; ++h) d.set(l, h, Matrix<double>::identity(64));
  TempDir tmp("size");
  save_dump(d, tmp.path());
  std::size_t bins = 0;
  for (const auto& entry : std::filesystem::directory_iterator(tmp.path())) {
    if (entry.path().extension() != ".bin") continue;
    ++bins;
    EXPECT_EQ(entry.file_size(), 64u * 64u * 4u);  // 4096 float32 values
  }
  EXPECT_EQ(bins, 336u);
}

TEST(DumpIo, NegativeEntryRejectedBeforeWriting) {
  std::mt19937_64 rng(1);
  auto dump = make_dump(1, 1, kLayout, Dtype::f64, true, rng);
  dump.matrices.begin()->second(0, 0) = -0.5;
  TempDir tmp("neg");
  const auto target = tmp.path() / "out";
  try {
    save_dump(dump, target);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::negative_entry);
  }
  EXPECT_FALSE(std::filesystem::exists(target));
}

TEST(DumpIo, WrongPayloadLengthIsShapeMismatch) {
  std::mt19937_64 rng(2);
  const auto dump = make_dump(1, 2, kLayout, Dtype::f32, false, rng);
  TempDir tmp("trunc");
  save_dump(dump, tmp.path());
  std::filesystem::resize_file(tmp.path() / matrix_file_name(0, 1), 60);
  try {
    load_dump(tmp.path());
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::shape_mismatch);
    EXPECT_NE(std::string(e.what()).find("attn_L0_H1.bin"), std::string::npos);
  }
}

TEST(DumpIo, NonFiniteAndUnknownDtypeAreRejectedOnLoad) {
  std::mt19937_64 rng(4);
  const auto dump = make_dump(1, 1, kLayout, Dtype::f64, true, rng);
  {
    TempDir tmp("nan");
    save_dump(dump, tmp.path());
    std::fstream f(tmp.path() / matrix_file_name(0, 0), std::ios::in | std::ios::out | std::ios::binary);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    f.write(reinterpret_cast<const char*>(&nan), sizeof nan);
    f.close();
    try {
      load_dump(tmp.path());
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::non_finite);
    }
  }
  {
    TempDir tmp("dtype");
    save_dump(dump, tmp.path());
    auto j = manifest_to_json(dump.manifest);
    j["dtype"] = "bf16";
    std::ofstream(tmp.path() / "manifest.json") << j.dump();
    try {
      load_dump(tmp.path());
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::unknown_dtype);
    }
  }
}

TEST(DumpIo, CorruptManifestAndUnknownKeys) {
  std::mt19937_64 rng(6);
  const auto dump = make_dump(1, 1, kLayout, Dtype::f32, true, rng);
  TempDir tmp("manifest");
  save_dump(dump, tmp.path());
  auto j = manifest_to_json(dump.manifest);
  j["producer"] = "some exporter";
  std::ofstream(tmp.path() / "manifest.json") << j.dump();
  EXPECT_EQ(load_dump(tmp.path()).manifest, dump.manifest);

  std::ofstream(tmp.path() / "manifest.json") << "{\"version\": 1,";
  try {
    load_dump(tmp.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::corrupt_manifest);
  }
  std::filesystem::remove(tmp.path() / "manifest.json");
  EXPECT_THROW(load_dump(tmp.path()), Error);
}

TEST(DumpIo, ExporterStyleFullDumpHasStochasticRows) {
  // A 2-layer toy export: full softmax matrices, rows sum to one.
  std::mt19937_64 rng(8);
  const SequenceLayout layout{10, {1, 4}, {4, 10}};
  const auto dump = make_dump(2, 2, layout, Dtype::f32, false, rng);
  TempDir tmp("exporter");
  save_dump(dump, tmp.path());
  const auto back = load_dump(tmp.path());
  for (const auto& [key, m] : back.matrices) {
    EXPECT_EQ(m.rows(), 10u);
    for (std::size_t i = 0; i < m.rows(); ++i) {
      double s = 0.0;
      for (double v : m.row(i)) s += v;
      EXPECT_NEAR(s, 1.0, 1e-4);
    }
    EXPECT_NO_THROW(check_alignment_matrix(alignment_block(back, key.layer, key.head)));
  }
}

TEST(DumpIo, ListDumpDirsFindsSortedChildren) {
  std::mt19937_64 rng(9);
  TempDir tmp("list");
  for (const char* id : {"b", "a", "c"}) {
    auto d = make_dump(1, 1, kLayout, Dtype::f32, true, rng);
    d.manifest.utterance_id = id;
    save_dump(d, tmp.path() / id);
  }
  std::filesystem::create_directories(tmp.path() / "not_a_dump");
  const auto dirs = list_dump_dirs(tmp.path());
  ASSERT_EQ(dirs.size(), 3u);
  EXPECT_EQ(dirs[0].filename(), "a");
  EXPECT_EQ(dirs[2].filename(), "c");
  EXPECT_EQ(list_dump_dirs(tmp.path() / "a").size(), 1u);
}

}  // namespace
}  // namespace oasalign
