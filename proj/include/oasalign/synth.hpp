#pragma once

// Synthetic attention with a known alignment. Planted heads carry
//   A = (1 - noise) * onehot(path) + noise * uniform
// and every other head is a jittered row-uniform distribution, so each row of
// every alignment block sums to one.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oasalign/attention_store.hpp"
#include "oasalign/parallel.hpp"
#include "oasalign/seed.hpp"
#include "oasalign/viterbi.hpp"

namespace oasalign {

enum class PathStyle { diagonal, random_monotone };

inline const char* to_string(PathStyle s) {
  return s == PathStyle::diagonal ? "diagonal" : "random-monotone";
}

inline PathStyle parse_path_style(const std::string& s) {
  if (s == "diagonal") return PathStyle::diagonal;
  if (s == "random-monotone") return PathStyle::random_monotone;
  fail(ErrorCode::invalid_argument, "unknown path style '" + s + "'");
}

/// Half the heads of layers 8 and 9 of a 24 x 14 model.
inline std::vector<HeadKey> default_planted_heads() {
  std::vector<HeadKey> heads;
  for (std::size_t l : {8, 9})
    for (std::size_t h = 0; h < 7; ++h) heads.push_back({l, h});
  return heads;
}

struct SynthSpec {
  std::size_t speech_len = 32;
  std::size_t text_len = 10;
  PathStyle path_style = PathStyle::random_monotone;
  double noise = 0.0;
  std::size_t n_layers = 24;
  std::size_t n_heads = 14;
  std::vector<HeadKey> planted_heads = default_planted_heads();
  std::uint64_t seed = 0;
  Dtype dtype = Dtype::f32;
  bool sliced = true;
  /// Relative amplitude of the multiplicative jitter on non-planted heads.
  double background_jitter = 0.5;

  void validate() const {
    require(text_len >= 1 && speech_len >= text_len, ErrorCode::invalid_argument,
            "synthetic spec needs speech_len >= text_len >= 1");
    require(noise >= 0.0 && noise <= 1.0, ErrorCode::invalid_argument, "noise must lie in [0, 1]");
    require(background_jitter >= 0.0 && background_jitter < 1.0, ErrorCode::invalid_argument,
            "background jitter must lie in [0, 1)");
    require(n_layers >= 1 && n_heads >= 1, ErrorCode::invalid_argument, "empty model shape");
    for (const auto& k : planted_heads)
      require(k.layer < n_layers && k.head < n_heads, ErrorCode::invalid_argument,
              "planted head (" + std::to_string(k.layer) + ", " + std::to_string(k.head) +
                  ") out of range");
  }
};

/// Monotone stay/+1 path from column 0 to column text_len-1.
inline AlignmentPath draw_monotone_path(std::size_t speech_len, std::size_t text_len,
                                        PathStyle style, std::mt19937_64& rng) {
  require(text_len >= 1 && speech_len >= text_len, ErrorCode::invalid_argument,
          "a covering path needs speech_len >= text_len >= 1");
  AlignmentPath path{std::vector<std::size_t>(speech_len), text_len};
  if (style == PathStyle::diagonal) {
    for (std::size_t i = 0; i < speech_len; ++i) path.indices[i] = i * text_len / speech_len;
    return path;
  }
  // Choose which of the speech_len-1 steps advance.
  std::vector<std::size_t> steps(speech_len - 1);
  std::iota(steps.begin(), steps.end(), 1);
  std::shuffle(steps.begin(), steps.end(), rng);
  std::vector<bool> advance(speech_len, false);
  for (std::size_t k = 0; k + 1 < text_len; ++k) advance[steps[k]] = true;
  for (std::size_t i = 1; i < speech_len; ++i)
    path.indices[i] = path.indices[i - 1] + (advance[i] ? 1 : 0);
  return path;
}

inline AlignmentMatrix planted_alignment(const AlignmentPath& path, double noise) {
  const double floor = noise / static_cast<double>(path.text_len);
  AlignmentMatrix a(path.speech_len(), path.text_len, floor);
  for (std::size_t i = 0; i < path.speech_len(); ++i) a(i, path.indices[i]) += 1.0 - noise;
  return a;
}

inline AlignmentMatrix background_alignment(std::size_t speech_len, std::size_t text_len,
                                            double jitter, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  AlignmentMatrix a(speech_len, text_len);
  for (std::size_t i = 0; i < speech_len; ++i) {
    double norm = 0.0;
    for (double& v : a.row(i)) norm += (v = 1.0 + jitter * u(rng));
    for (double& v : a.row(i)) v /= norm;
  }
  return a;
}

struct SynthAlignment {
  AlignmentMatrix matrix;
  AlignmentPath path;
};

/// One planted block drawn from spec.seed.
inline SynthAlignment synth_alignment_matrix(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  auto path = draw_monotone_path(spec.speech_len, spec.text_len, spec.path_style, rng);
  auto matrix = planted_alignment(path, spec.noise);
  return {std::move(matrix), std::move(path)};
}

namespace detail {

// Full attention for layout text=[0, L_t), speech=[L_t, L_t + L_s): speech rows
// carry the alignment block on text columns only, other rows are causal-uniform.
inline Matrix<double> embed_full(const AlignmentMatrix& block, const SequenceLayout& layout) {
  Matrix<double> full(layout.seq_len, layout.seq_len, 0.0);
  for (std::size_t i = 0; i < layout.seq_len; ++i) {
    if (i >= layout.speech.start && i < layout.speech.end) {
      for (std::size_t j = 0; j < block.cols(); ++j)
        full(i, layout.text.start + j) = block(i - layout.speech.start, j);
    } else {
      for (std::size_t j = 0; j <= i; ++j) full(i, j) = 1.0 / static_cast<double>(i + 1);
    }
  }
  return full;
}

}  // namespace detail

inline SequenceLayout synth_layout(const SynthSpec& spec) {
  return SequenceLayout{spec.text_len + spec.speech_len,
                        Span{0, spec.text_len},
                        Span{spec.text_len, spec.text_len + spec.speech_len}};
}

struct SynthUtterance {
  AttentionDump dump;
  AlignmentPath path;
  double noise = 0.0;
};

/// Dump for one utterance: planted heads share `path` at the spec's noise level.
inline SynthUtterance synth_dump(const SynthSpec& spec, const std::string& utterance_id) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  SynthUtterance out;
  out.noise = spec.noise;
  out.path = draw_monotone_path(spec.speech_len, spec.text_len, spec.path_style, rng);

  Manifest& m = out.dump.manifest;
  m.utterance_id = utterance_id;
  m.n_layers = spec.n_layers;
  m.n_heads = spec.n_heads;
  m.layout = synth_layout(spec);
  m.dtype = spec.dtype;
  m.sliced = spec.sliced;

  std::vector<HeadKey> planted = spec.planted_heads;
  std::sort(planted.begin(), planted.end());
  const AlignmentMatrix aligned = planted_alignment(out.path, spec.noise);
  for (std::size_t l = 0; l < spec.n_layers; ++l) {
    for (std::size_t h = 0; h < spec.n_heads; ++h) {
      AlignmentMatrix block =
          std::binary_search(planted.begin(), planted.end(), HeadKey{l, h})
              ? aligned
              : background_alignment(spec.speech_len, spec.text_len, spec.background_jitter, rng);
      out.dump.set(l, h, spec.sliced ? std::move(block) : detail::embed_full(block, m.layout));
    }
  }
  return out;
}

/// Stand-in WER as a function of the planted noise level. Not a model of real ASR error.
struct PseudoWerModel {
  double base = 0.02;
  double slope = 0.5;
  double jitter_sd = 0.02;

  double operator()(double noise, std::mt19937_64& rng) const {
    std::normal_distribution<double> jitter(0.0, jitter_sd);
    return std::max(0.0, base + slope * noise + jitter(rng));
  }
};

inline std::string synth_utterance_id(std::size_t index) {
  std::string digits = std::to_string(index);
  return "utt_" + std::string(digits.size() < 5 ? 5 - digits.size() : 0, '0') + digits;
}

struct CorpusUtterance {
  SynthUtterance utterance;
  double wer = 0.0;
};

/// Utterance `index` of the corpus defined by `templ`. The noise level is drawn
/// uniformly from [0, 1] with a seed derived from (templ.seed, utterance id),
/// unless `fixed_noise` pins it.
inline CorpusUtterance synth_corpus_utterance(const SynthSpec& templ, const PseudoWerModel& wer,
                                              std::size_t index,
                                              std::optional<double> fixed_noise = std::nullopt) {
  const std::string id = synth_utterance_id(index);
  std::mt19937_64 rng(derive_seed(templ.seed, id));
  SynthSpec spec = templ;
  spec.noise = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (fixed_noise) spec.noise = *fixed_noise;
  spec.seed = rng();
  CorpusUtterance out;
  out.wer = wer(spec.noise, rng);
  out.utterance = synth_dump(spec, id);
  return out;
}

struct SynthCorpus {
  std::vector<CorpusUtterance> utterances;
};

inline SynthCorpus synth_corpus(const SynthSpec& templ, std::size_t n_utts,
                                const PseudoWerModel& wer = {}, std::size_t jobs = 1,
                                std::optional<double> fixed_noise = std::nullopt) {
  templ.validate();
  SynthCorpus corpus;
  corpus.utterances.resize(n_utts);
  parallel_for(n_utts, jobs, [&](std::size_t i) {
    corpus.utterances[i] = synth_corpus_utterance(templ, wer, i, fixed_noise);
  });
  return corpus;
}

inline nlohmann::json synth_spec_json(const SynthSpec& s, std::size_t n_utts,
                                      const PseudoWerModel& wer,
                                      std::optional<double> fixed_noise = std::nullopt) {
  nlohmann::json planted = nlohmann::json::array();
  for (const auto& k : s.planted_heads) planted.push_back({k.layer, k.head});
  return {{"speech_len", s.speech_len},
          {"text_len", s.text_len},
          {"path_style", to_string(s.path_style)},
          {"noise", fixed_noise ? nlohmann::json(*fixed_noise)
                                : nlohmann::json("uniform[0,1] per utterance")},
          {"n_layers", s.n_layers},
          {"n_heads", s.n_heads},
          {"planted_heads", planted},
          {"seed", s.seed},
          {"dtype", to_string(s.dtype)},
          {"sliced", s.sliced},
          {"background_jitter", s.background_jitter},
          {"n_utts", n_utts},
          {"wer_model",
           {{"kind", "pseudo_wer_linear_in_noise"},
            {"note", "synthetic stand-in, not a measured WER"},
            {"base", wer.base},
            {"slope", wer.slope},
            {"jitter_sd", wer.jitter_sd}}}};
}

/// Writes `dir/<utterance_id>/` dumps, `wer.jsonl`, `truth.jsonl` and `synth_spec.json`.
inline void write_synth_corpus(const std::filesystem::path& dir, const SynthSpec& templ,
                               std::size_t n_utts, const PseudoWerModel& wer = {},
                               std::size_t jobs = 1,
                               std::optional<double> fixed_noise = std::nullopt) {
  if (fixed_noise)
    require(*fixed_noise >= 0.0 && *fixed_noise <= 1.0, ErrorCode::invalid_argument,
            "noise must lie in [0, 1]");
  templ.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorCode::io_failure, "cannot create " + dir.string() + ": " + ec.message());
  std::vector<double> wers(n_utts);
  std::vector<nlohmann::json> truth(n_utts);
  parallel_for(n_utts, jobs, [&](std::size_t i) {
    auto u = synth_corpus_utterance(templ, wer, i, fixed_noise);
    save_dump(u.utterance.dump, dir / u.utterance.dump.manifest.utterance_id);
    wers[i] = u.wer;
    truth[i] = {{"utterance_id", u.utterance.dump.manifest.utterance_id},
                {"noise", u.utterance.noise},
                {"path", u.utterance.path.indices},
                {"durations", path_to_durations(u.utterance.path)}};
  });
  std::ofstream wer_out(dir / "wer.jsonl", std::ios::trunc);
  std::ofstream truth_out(dir / "truth.jsonl", std::ios::trunc);
  require(wer_out && truth_out, ErrorCode::io_failure, "cannot write corpus side files");
  for (std::size_t i = 0; i < n_utts; ++i) {
    wer_out << nlohmann::json{{"utterance_id", synth_utterance_id(i)}, {"wer", wers[i]}}.dump()
            << '\n';
    truth_out << truth[i].dump() << '\n';
  }
  std::ofstream spec_out(dir / "synth_spec.json", std::ios::trunc);
  spec_out << synth_spec_json(templ, n_utts, wer, fixed_noise).dump(2) << '\n';
  require(static_cast<bool>(spec_out), ErrorCode::io_failure, "cannot write synth_spec.json");
}

}  // namespace oasalign
