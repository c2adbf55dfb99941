#pragma once

// Persistence of attention dumps and extraction of the speech->text alignment block.
//
// On-disk layout of a dump directory:
//   manifest.json          version, utterance_id, n_layers, n_heads, seq_len,
//                          text_span, speech_span, dtype ("f32"|"f64"), sliced
//   attn_L{l}_H{h}.bin     little-endian row-major floats, seq_len*seq_len values
//                          (or L_s*L_t when sliced)
//
// All indices are 0-based. Spans are half-open [start, end).

#include <algorithm>
#include <bit>
#include <compare>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oasalign/error.hpp"
#include "oasalign/matrix.hpp"

namespace oasalign {

/// Speech-query rows by text-key columns, cut out of a full attention matrix.
using AlignmentMatrix = Matrix<double>;

struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const noexcept { return end - start; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct SequenceLayout {
  std::size_t seq_len = 0;
  Span text;
  Span speech;

  std::size_t text_len() const noexcept { return text.length(); }
  std::size_t speech_len() const noexcept { return speech.length(); }

  void validate() const {
    const bool ok = text.start < text.end && text.end <= speech.start &&
                    speech.start < speech.end && speech.end <= seq_len;
    require(ok, ErrorCode::invalid_layout,
            "invalid layout: need 0 <= text_start < text_end <= speech_start < speech_end <= "
            "seq_len, got text=[" +
                std::to_string(text.start) + "," + std::to_string(text.end) + ") speech=[" +
                std::to_string(speech.start) + "," + std::to_string(speech.end) +
                ") seq_len=" + std::to_string(seq_len));
  }

  friend bool operator==(const SequenceLayout&, const SequenceLayout&) = default;
};

enum class Dtype { f32, f64 };

inline const char* to_string(Dtype d) { return d == Dtype::f32 ? "f32" : "f64"; }

inline Dtype parse_dtype(const std::string& tag) {
  if (tag == "f32") return Dtype::f32;
  if (tag == "f64") return Dtype::f64;
  fail(ErrorCode::unknown_dtype, "unknown dtype tag '" + tag + "'");
}

inline std::size_t dtype_size(Dtype d) { return d == Dtype::f32 ? 4 : 8; }

struct HeadKey {
  std::size_t layer = 0;
  std::size_t head = 0;

  friend auto operator<=>(const HeadKey&, const HeadKey&) = default;
};

struct Manifest {
  int version = 1;
  std::string utterance_id;
  std::size_t n_layers = 0;
  std::size_t n_heads = 0;
  SequenceLayout layout;
  Dtype dtype = Dtype::f32;
  bool sliced = false;

  std::size_t matrix_rows() const { return sliced ? layout.speech_len() : layout.seq_len; }
  std::size_t matrix_cols() const { return sliced ? layout.text_len() : layout.seq_len; }

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

/// One forward pass worth of attention: a matrix per (layer, head).
///
/// Values are held as double. For f32 dumps every value is exactly representable
/// as float (set() rounds on insertion), which makes save/load bit-exact.
struct AttentionDump {
  Manifest manifest;
  std::map<HeadKey, Matrix<double>> matrices;

  void set(std::size_t layer, std::size_t head, Matrix<double> m) {
    if (manifest.dtype == Dtype::f32)
      for (double& v : m.values()) v = static_cast<double>(static_cast<float>(v));
    matrices[HeadKey{layer, head}] = std::move(m);
  }

  const Matrix<double>& at(std::size_t layer, std::size_t head) const {
    auto it = matrices.find(HeadKey{layer, head});
    require(it != matrices.end(), ErrorCode::invalid_argument,
            "dump has no matrix for layer " + std::to_string(layer) + " head " +
                std::to_string(head));
    return it->second;
  }

  void validate() const {
    const Manifest& m = manifest;
    require(m.version == 1, ErrorCode::corrupt_manifest,
            "unsupported manifest version " + std::to_string(m.version));
    require(m.n_layers >= 1 && m.n_heads >= 1, ErrorCode::corrupt_manifest,
            "n_layers and n_heads must be positive");
    m.layout.validate();
    require(matrices.size() == m.n_layers * m.n_heads, ErrorCode::shape_mismatch,
            "dump holds " + std::to_string(matrices.size()) + " matrices, manifest declares " +
                std::to_string(m.n_layers * m.n_heads));
    for (const auto& [key, mat] : matrices) {
      const std::string where =
          "layer " + std::to_string(key.layer) + " head " + std::to_string(key.head);
      require(key.layer < m.n_layers && key.head < m.n_heads, ErrorCode::shape_mismatch,
              where + " is outside the declared model shape");
      require(mat.rows() == m.matrix_rows() && mat.cols() == m.matrix_cols(),
              ErrorCode::shape_mismatch,
              where + ": matrix is " + std::to_string(mat.rows()) + "x" +
                  std::to_string(mat.cols()) + ", manifest expects " +
                  std::to_string(m.matrix_rows()) + "x" + std::to_string(m.matrix_cols()));
      for (std::size_t k = 0; k < mat.size(); ++k) {
        const double v = mat.values()[k];
        if (!std::isfinite(v))
          fail(ErrorCode::non_finite, where + ": non-finite entry at flat index " +
                                          std::to_string(k));
        if (v < 0.0)
          fail(ErrorCode::negative_entry, where + ": negative entry at flat index " +
                                              std::to_string(k));
      }
    }
  }
};

inline std::string matrix_file_name(std::size_t layer, std::size_t head) {
  return "attn_L" + std::to_string(layer) + "_H" + std::to_string(head) + ".bin";
}

namespace detail {

template <class U>
U to_little_endian(U bits) {
  if constexpr (std::endian::native == std::endian::big) {
    U out = 0;
    for (std::size_t b = 0; b < sizeof(U); ++b) {
      out = (out << 8) | (bits & 0xff);
      bits >>= 8;
    }
    return out;
  } else {
    return bits;
  }
}

inline std::vector<char> encode_payload(const Matrix<double>& m, Dtype dtype) {
  std::vector<char> bytes(m.size() * dtype_size(dtype));
  char* out = bytes.data();
  for (double v : m.values()) {
    if (dtype == Dtype::f32) {
      auto bits = to_little_endian(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      std::memcpy(out, &bits, 4);
      out += 4;
    } else {
      auto bits = to_little_endian(std::bit_cast<std::uint64_t>(v));
      std::memcpy(out, &bits, 8);
      out += 8;
    }
  }
  return bytes;
}

inline std::vector<double> decode_payload(const std::vector<char>& bytes, Dtype dtype) {
  const std::size_t width = dtype_size(dtype);
  std::vector<double> values(bytes.size() / width);
  const char* in = bytes.data();
  for (double& v : values) {
    if (dtype == Dtype::f32) {
      std::uint32_t bits;
      std::memcpy(&bits, in, 4);
      v = static_cast<double>(std::bit_cast<float>(to_little_endian(bits)));
    } else {
      std::uint64_t bits;
      std::memcpy(&bits, in, 8);
      v = std::bit_cast<double>(to_little_endian(bits));
    }
    in += width;
  }
  return values;
}

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io_failure, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const char* data, std::size_t n) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::io_failure, "cannot write " + path.string());
  out.write(data, static_cast<std::streamsize>(n));
  require(static_cast<bool>(out), ErrorCode::io_failure, "short write to " + path.string());
}

inline Span span_from_json(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2)
    fail(ErrorCode::corrupt_manifest, std::string(key) + " must be a [start, end) pair");
  return Span{v[0].get<std::size_t>(), v[1].get<std::size_t>()};
}

}  // namespace detail

inline nlohmann::json manifest_to_json(const Manifest& m) {
  return {
      {"version", m.version},
      {"utterance_id", m.utterance_id},
      {"n_layers", m.n_layers},
      {"n_heads", m.n_heads},
      {"seq_len", m.layout.seq_len},
      {"text_span", {m.layout.text.start, m.layout.text.end}},
      {"speech_span", {m.layout.speech.start, m.layout.speech.end}},
      {"dtype", to_string(m.dtype)},
      {"sliced", m.sliced},
  };
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
  Manifest m;
  try {
    m.version = j.at("version").get<int>();
    m.utterance_id = j.at("utterance_id").get<std::string>();
    m.n_layers = j.at("n_layers").get<std::size_t>();
    m.n_heads = j.at("n_heads").get<std::size_t>();
    m.layout.seq_len = j.at("seq_len").get<std::size_t>();
    m.layout.text = detail::span_from_json(j, "text_span");
    m.layout.speech = detail::span_from_json(j, "speech_span");
    m.dtype = parse_dtype(j.at("dtype").get<std::string>());
    m.sliced = j.at("sliced").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::corrupt_manifest, std::string("manifest: ") + e.what());
  }
  require(m.version == 1, ErrorCode::corrupt_manifest,
          "unsupported manifest version " + std::to_string(m.version));
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& dir) {
  const auto bytes = detail::read_file(dir / "manifest.json");
  nlohmann::json j = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr, false);
  require(!j.is_discarded() && j.is_object(), ErrorCode::corrupt_manifest,
          "manifest.json in " + dir.string() + " is not a JSON object");
  return manifest_from_json(j);
}

inline AttentionDump load_dump(const std::filesystem::path& dir) {
  AttentionDump dump;
  dump.manifest = load_manifest(dir);
  const Manifest& m = dump.manifest;
  require(m.n_layers >= 1 && m.n_heads >= 1, ErrorCode::corrupt_manifest,
          "n_layers and n_heads must be positive");
  m.layout.validate();
  const std::size_t rows = m.matrix_rows();
  const std::size_t cols = m.matrix_cols();
  const std::size_t expected_bytes = rows * cols * dtype_size(m.dtype);
  for (std::size_t l = 0; l < m.n_layers; ++l) {
    for (std::size_t h = 0; h < m.n_heads; ++h) {
      const auto path = dir / matrix_file_name(l, h);
      const auto bytes = detail::read_file(path);
      require(bytes.size() == expected_bytes, ErrorCode::shape_mismatch,
              path.string() + ": payload is " + std::to_string(bytes.size()) +
                  " bytes, manifest shape " + std::to_string(rows) + "x" +
                  std::to_string(cols) + " " + to_string(m.dtype) + " needs " +
                  std::to_string(expected_bytes));
      dump.matrices.emplace(HeadKey{l, h},
                            Matrix<double>(rows, cols, detail::decode_payload(bytes, m.dtype)));
    }
  }
  dump.validate();
  return dump;
}

/// Validates the dump completely before touching the filesystem.
inline void save_dump(const AttentionDump& dump, const std::filesystem::path& dir) {
  dump.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorCode::io_failure, "cannot create " + dir.string() + ": " + ec.message());
  for (const auto& [key, mat] : dump.matrices) {
    const auto bytes = detail::encode_payload(mat, dump.manifest.dtype);
    detail::write_file(dir / matrix_file_name(key.layer, key.head), bytes.data(), bytes.size());
  }
  const std::string text = manifest_to_json(dump.manifest).dump(2) + "\n";
  detail::write_file(dir / "manifest.json", text.data(), text.size());
}

/// Rows [speech_start, speech_end) restricted to columns [text_start, text_end).
/// Pure projection: no renormalization.
template <class T>
Matrix<T> extract_alignment_submatrix(const Matrix<T>& full, const SequenceLayout& layout) {
  layout.validate();
  require(full.rows() == layout.seq_len && full.cols() == layout.seq_len,
          ErrorCode::shape_mismatch,
          "full attention matrix is " + std::to_string(full.rows()) + "x" +
              std::to_string(full.cols()) + ", layout seq_len is " +
              std::to_string(layout.seq_len));
  Matrix<T> out(layout.speech_len(), layout.text_len());
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto src = full.row(layout.speech.start + i).subspan(layout.text.start, layout.text_len());
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

/// Alignment block for one head, whether the dump is full or pre-sliced.
inline AlignmentMatrix alignment_block(const AttentionDump& dump, std::size_t layer,
                                       std::size_t head) {
  const auto& mat = dump.at(layer, head);
  return dump.manifest.sliced ? mat : extract_alignment_submatrix(mat, dump.manifest.layout);
}

/// Checks the alignment-matrix contract: entries in [0, 1], row sums <= 1 + tolerance.
inline void check_alignment_matrix(const AlignmentMatrix& a, double tolerance = 1e-4) {
  require(a.rows() >= 1 && a.cols() >= 1, ErrorCode::degenerate_input, "empty alignment matrix");
  require_finite(a, "alignment matrix");
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double v = a(i, j);
      require(v >= 0.0 && v <= 1.0, ErrorCode::invalid_argument,
              "alignment entry (" + std::to_string(i) + ", " + std::to_string(j) +
                  ") outside [0, 1]");
      s += v;
    }
    require(s <= 1.0 + tolerance, ErrorCode::invalid_argument,
            "alignment row " + std::to_string(i) + " sums to " + std::to_string(s));
  }
}

}  // namespace oasalign

namespace oasalign {

/// A dump directory itself, or every immediate subdirectory holding a manifest,
/// sorted by name.
inline std::vector<std::filesystem::path> list_dump_dirs(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  require(fs::is_directory(root), ErrorCode::io_failure, root.string() + " is not a directory");
  if (fs::exists(root / "manifest.json")) return {root};
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.json"))
      dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

}  // namespace oasalign
