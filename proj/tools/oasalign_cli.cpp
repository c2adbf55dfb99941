// oasalign: command-line front end for attention-alignment analysis.
//
//   inspect       summarize and validate one dump
//   oas           per-head OAS table, per-layer top-k means and final OAS
//   select-heads  designate alignment heads from an OAS table
//   path          optimal alignment path and durations for one head
//   supervise     CoT supervision targets from the best teacher head
//   loss          path loss / gradient norms per head, progress loss
//   corr          final OAS vs WER correlation report
//   synth         synthetic corpus with planted alignments
//   selfcheck     Viterbi oracle and finite-difference gradient suites
//
// Exit codes: 0 success, 1 runtime error, 2 usage error, 3 selfcheck failure.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#if __has_include(<CLI/CLI.hpp>)
#include <CLI/CLI.hpp>
#else
#include "CLI11.hpp"
#endif
#include "oasalign/oasalign.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace oasalign;

namespace {

struct GlobalOptions {
  bool json_diagnostics = false;
  std::size_t jobs = 1;
  std::uint64_t seed = 0;
};

GlobalOptions g_opts;

void warn(const std::string& message) {
  if (g_opts.json_diagnostics)
    spdlog::warn(json{{"level", "warn"}, {"message", message}}.dump());
  else
    spdlog::warn(message);
}

void info(const std::string& message) {
  if (g_opts.json_diagnostics)
    spdlog::info(json{{"level", "info"}, {"message", message}}.dump());
  else
    spdlog::info(message);
}

void setup_logging() {
  auto logger = spdlog::stderr_logger_st("oasalign");
  logger->set_pattern(g_opts.json_diagnostics ? "%v" : "oasalign: %l: %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("OAS_ALIGN_LOG")) spdlog::set_level(spdlog::level::from_str(env));
}

void write_text(const std::string& out_path, const std::string& text) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
    return;
  }
  const fs::path p(out_path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::io_failure, "cannot write " + out_path);
  out << text;
  require(static_cast<bool>(out), ErrorCode::io_failure, "short write to " + out_path);
}

void write_json(const std::string& out_path, const json& j) { write_text(out_path, j.dump(2) + "\n"); }

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io_failure, "cannot open " + path);
  json j = json::parse(in, nullptr, false);
  require(!j.is_discarded(), ErrorCode::invalid_argument, path + " is not valid JSON");
  return j;
}

std::vector<fs::path> expand_dumps(const std::vector<std::string>& roots) {
  std::vector<fs::path> dirs;
  for (const auto& r : roots) {
    auto found = list_dump_dirs(r);
    dirs.insert(dirs.end(), found.begin(), found.end());
  }
  require(!dirs.empty(), ErrorCode::invalid_argument, "no dump directories found");
  return dirs;
}

struct CorpusTables {
  std::vector<std::string> ids;
  std::vector<OasTable> tables;
};

// Loads each dump on a worker, keeps only its OAS table.
CorpusTables corpus_tables(const std::vector<fs::path>& dirs) {
  CorpusTables out;
  out.ids.resize(dirs.size());
  out.tables.resize(dirs.size());
  parallel_for(dirs.size(), g_opts.jobs, [&](std::size_t i) {
    const auto dump = load_dump(dirs[i]);
    out.ids[i] = dump.manifest.utterance_id;
    out.tables[i] = head_oas_table(dump);
  });
  return out;
}

HeadPolicy parse_policy(const std::string& policy, const std::vector<std::size_t>& layers,
                        std::optional<std::size_t> per_layer, std::size_t count) {
  if (policy == "fixed") return FixedLayers{layers, per_layer};
  if (policy == "top") return TopOas{count};
  fail(ErrorCode::invalid_argument, "unknown head policy '" + policy + "' (fixed|top)");
}

double frobenius(const Matrix<double>& m) {
  double s = 0.0;
  for (double v : m.values()) s += v * v;
  return std::sqrt(s);
}

// ---------------------------------------------------------------- inspect

struct InspectArgs {
  std::string dump;
  std::string out;
};

int run_inspect(const InspectArgs& a) {
  const auto dump = load_dump(a.dump);
  const Manifest& m = dump.manifest;
  const double row_tol = m.dtype == Dtype::f32 ? 1e-4 : 1e-10;
  json heads = json::array();
  std::size_t warnings = 0;
  for (const auto& [key, mat] : dump.matrices) {
    double row_min = 1e300, row_max = -1e300;
    for (std::size_t i = 0; i < mat.rows(); ++i) {
      double s = 0.0;
      for (double v : mat.row(i)) s += v;
      row_min = std::min(row_min, s);
      row_max = std::max(row_max, s);
    }
    const auto block = alignment_block(dump, key.layer, key.head);
    json entry = {{"layer", key.layer},
                  {"head", key.head},
                  {"row_sum_min", row_min},
                  {"row_sum_max", row_max},
                  {"alignment_mass", total_sum(block)}};
    try {
      entry["oas"] = oas(block);
    } catch (const Error& e) {
      entry["oas"] = nullptr;
      entry["oas_error"] = to_string(e.code());
    }
    if (!m.sliced && (row_min < 1.0 - row_tol || row_max > 1.0 + row_tol)) {
      ++warnings;
      warn("layer " + std::to_string(key.layer) + " head " + std::to_string(key.head) +
           ": full-matrix rows are not distributions (sums in [" + std::to_string(row_min) + ", " +
           std::to_string(row_max) + "])");
    }
    heads.push_back(std::move(entry));
  }
  write_json(a.out, {{"manifest", manifest_to_json(m)},
                     {"row_sum_tolerance", row_tol},
                     {"warnings", warnings},
                     {"heads", heads}});
  return 0;
}

// ---------------------------------------------------------------- oas

struct OasArgs {
  std::vector<std::string> dumps;
  std::string out;
  std::size_t k_layer = kDefaultLayerTopK;
  std::size_t k_final = kDefaultFinalTopK;
  bool per_utterance = false;
};

int run_oas(const OasArgs& a) {
  const auto corpus = corpus_tables(expand_dumps(a.dumps));
  const auto report =
      make_oas_report(corpus.ids, corpus.tables, a.k_layer, a.k_final, a.per_utterance);
  write_json(a.out, oas_report_json(report));
  info("OAS over " + std::to_string(report.n_utts) + " utterances");
  return 0;
}

// ---------------------------------------------------------------- select-heads

struct SelectArgs {
  std::string report;
  std::vector<std::string> dumps;
  std::string policy = "fixed";
  std::vector<std::size_t> layers{8, 9};
  std::optional<std::size_t> per_layer;
  std::size_t count = 1;
  std::string out;
};

OasTable table_from_sources(const std::string& report, const std::vector<std::string>& dumps) {
  require(report.empty() != dumps.empty(), ErrorCode::invalid_argument,
          "give exactly one of --report or --dump");
  if (!report.empty()) return table_from_json(read_json_file(report).at("per_head"));
  return mean_table(corpus_tables(expand_dumps(dumps)).tables);
}

int run_select(const SelectArgs& a) {
  const auto table = table_from_sources(a.report, a.dumps);
  const auto set = select_alignment_heads(table, parse_policy(a.policy, a.layers, a.per_layer, a.count));
  write_json(a.out, head_set_json(set, table));
  return 0;
}

// ---------------------------------------------------------------- path

struct PathArgs {
  std::string dump;
  std::optional<std::size_t> layer;
  std::optional<std::size_t> head;
  std::string out;
};

int run_path(const PathArgs& a) {
  require(a.layer.has_value() == a.head.has_value(), ErrorCode::invalid_argument,
          "--layer and --head go together");
  const auto dump = load_dump(a.dump);
  HeadKey key = a.layer ? HeadKey{*a.layer, *a.head} : best_head(head_oas_table(dump));
  const auto path = optimal_path(alignment_block(dump, key.layer, key.head));
  write_json(a.out, path_json(dump.manifest.utterance_id, key, path));
  return 0;
}

// ---------------------------------------------------------------- supervise

struct SuperviseArgs {
  std::vector<std::string> dumps;
  std::string tokens;
  std::string out;
  bool fallback_corpus_head = false;
};

std::vector<TokenId> tokens_for(const json& tokens, const std::string& id, bool single) {
  const json* list = nullptr;
  if (tokens.is_array() && single) list = &tokens;
  if (tokens.is_object() && tokens.contains(id)) list = &tokens.at(id);
  require(list != nullptr, ErrorCode::invalid_argument,
          "no token sequence for utterance '" + id + "'");
  return list->get<std::vector<TokenId>>();
}

// Per-head OAS of one dump; heads whose OAS is undefined become -1.
OasTable tolerant_table(const AttentionDump& dump, std::vector<std::string>& notes) {
  const Manifest& m = dump.manifest;
  OasTable t(m.n_layers, m.n_heads, -1.0);
  for (std::size_t l = 0; l < m.n_layers; ++l)
    for (std::size_t h = 0; h < m.n_heads; ++h) {
      try {
        t(l, h) = oas(alignment_block(dump, l, h));
      } catch (const Error& e) {
        notes.push_back(m.utterance_id + ": layer " + std::to_string(l) + " head " +
                        std::to_string(h) + " skipped (" + e.what() + ")");
      }
    }
  return t;
}

int run_supervise(const SuperviseArgs& a) {
  const auto dirs = expand_dumps(a.dumps);
  const json tokens = read_json_file(a.tokens);
  const bool single = dirs.size() == 1;

  struct Result {
    std::string line;
    std::vector<std::string> notes;
  };
  std::vector<Result> results(dirs.size());
  std::vector<OasTable> tables(dirs.size());
  std::vector<AttentionDump> dumps(dirs.size());

  parallel_for(dirs.size(), g_opts.jobs, [&](std::size_t i) {
    dumps[i] = load_dump(dirs[i]);
    tables[i] = tolerant_table(dumps[i], results[i].notes);
  });

  std::optional<HeadKey> corpus_head;
  if (a.fallback_corpus_head) corpus_head = best_head(mean_table(tables));

  parallel_for(dirs.size(), g_opts.jobs, [&](std::size_t i) {
    const auto& dump = dumps[i];
    const std::string& id = dump.manifest.utterance_id;
    const auto t = tokens_for(tokens, id, single);
    const std::uint64_t seed = derive_seed(g_opts.seed, id);

    TeacherChoice teacher{best_head(tables[i]), 0.0};
    teacher.oas = tables[i](teacher.head.layer, teacher.head.head);
    require(teacher.oas >= 0.0 || corpus_head, ErrorCode::degenerate_input,
            "utterance '" + id + "' has no head with a defined OAS");
    auto bundle = build_supervision(t, alignment_block(dump, teacher.head.layer, teacher.head.head),
                                    seed);
    const bool degenerate = teacher.oas < 0.0 || !bundle.warnings.empty();
    if (degenerate && corpus_head && *corpus_head != teacher.head) {
      results[i].notes.push_back(id + ": best head degenerate, using corpus-level best head");
      teacher.head = *corpus_head;
      const auto block = alignment_block(dump, teacher.head.layer, teacher.head.head);
      teacher.oas = oas(block);
      bundle = build_supervision(t, block, seed);
    }
    for (const auto& w : bundle.warnings) results[i].notes.push_back(id + ": " + w);
    results[i].line = supervision_record(id, teacher, bundle, seed).dump();
  });

  std::string text;
  for (const auto& r : results) {
    for (const auto& n : r.notes) warn(n);
    text += r.line + "\n";
  }
  write_text(a.out, text);
  return 0;
}

// ---------------------------------------------------------------- loss

struct LossArgs {
  std::vector<std::string> dumps;
  std::string heads_file;
  std::string policy = "fixed";
  std::vector<std::size_t> layers{8, 9};
  std::optional<std::size_t> per_layer;
  std::size_t count = 1;
  bool floor = false;
  std::string supervision;
  std::string predictions;
  std::string positions = "cot";
  std::string out;
};

json dump_losses(const LossArgs& a) {
  const auto dirs = expand_dumps(a.dumps);
  HeadSet heads;
  if (!a.heads_file.empty()) {
    heads = head_set_from_json(read_json_file(a.heads_file));
  } else {
    heads = select_alignment_heads(mean_table(corpus_tables(dirs).tables),
                                   parse_policy(a.policy, a.layers, a.per_layer, a.count));
  }
  require(!heads.heads.empty(), ErrorCode::invalid_argument, "no heads designated");
  LossOptions options;
  if (a.floor) options.probability_floor = kDefaultProbabilityFloor;

  std::vector<json> rows(dirs.size());
  std::vector<double> means(dirs.size());
  parallel_for(dirs.size(), g_opts.jobs, [&](std::size_t i) {
    const auto dump = load_dump(dirs[i]);
    json per_head = json::array();
    double acc = 0.0;
    for (const auto& key : heads.heads) {
      const auto block = alignment_block(dump, key.layer, key.head);
      const auto loss = oas_loss(block, options);
      // Logit gradient of the masked softmax: rows renormalized over the text span.
      Matrix<double> renorm = block;
      for (std::size_t r = 0; r < renorm.rows(); ++r) {
        double s = 0.0;
        for (double v : renorm.row(r)) s += v;
        for (double& v : renorm.row(r)) v /= s;
      }
      Matrix<double> grad_logits = renorm;
      for (std::size_t r = 0; r < grad_logits.rows(); ++r) {
        grad_logits(r, loss.path.indices[r]) -= 1.0;
        for (double& v : grad_logits.row(r)) v /= static_cast<double>(grad_logits.rows());
      }
      per_head.push_back({{"layer", key.layer},
                          {"head", key.head},
                          {"loss", loss.loss},
                          {"grad_a_norm", frobenius(oas_loss_grad_wrt_A(block, loss.path, options))},
                          {"grad_logits_norm", frobenius(grad_logits)}});
      acc += loss.loss;
    }
    means[i] = acc / static_cast<double>(heads.heads.size());
    rows[i] = {{"utterance_id", dump.manifest.utterance_id},
               {"mean_loss", means[i]},
               {"heads", per_head}};
  });
  double batch = 0.0;
  for (double m : means) batch += m;
  json designated = json::array();
  for (const auto& k : heads.heads) designated.push_back({k.layer, k.head});
  return {{"heads", designated},
          {"policy", heads.policy},
          {"probability_floor", a.floor ? json(kDefaultProbabilityFloor) : json(nullptr)},
          {"per_utterance", rows},
          {"batch_mean_loss", batch / static_cast<double>(rows.size())}};
}

json progress_losses(const LossArgs& a) {
  require(!a.predictions.empty(), ErrorCode::invalid_argument,
          "--supervision needs --predictions");
  require(a.positions == "cot" || a.positions == "tokens", ErrorCode::invalid_argument,
          "--positions must be cot or tokens");
  const auto targets = read_jsonl_by_id(a.supervision);
  const auto preds = read_jsonl_by_id(a.predictions);
  json rows = json::array();
  double batch = 0.0;
  for (const auto& [id, rec] : targets) {
    auto it = preds.find(id);
    require(it != preds.end(), ErrorCode::invalid_argument, "no prediction for '" + id + "'");
    const auto p_hat = it->second.at("p_hat").get<std::vector<double>>();
    std::vector<double> p;
    std::vector<bool> valid;
    if (a.positions == "cot") {
      for (const auto& v : rec.at("o_p")) {
        valid.push_back(!v.is_null());
        p.push_back(v.is_null() ? 0.0 : v.get<double>());
      }
    } else {
      p = progress_values(rec.at("durations").get<DurationVector>());
      valid.assign(p.size(), true);
    }
    const double loss = progress_loss(p_hat, p, valid);
    const auto grad = progress_loss_grad(p_hat, p, valid);
    double g2 = 0.0;
    for (double g : grad) g2 += g * g;
    rows.push_back({{"utterance_id", id}, {"progress_loss", loss}, {"grad_norm", std::sqrt(g2)}});
    batch += loss;
  }
  require(!rows.empty(), ErrorCode::invalid_argument, "empty supervision file");
  return {{"positions", a.positions},
          {"per_utterance", rows},
          {"batch_mean_progress_loss", batch / static_cast<double>(rows.size())}};
}

int run_loss(const LossArgs& a) {
  require(!a.dumps.empty() || !a.supervision.empty(), ErrorCode::invalid_argument,
          "give --dump and/or --supervision");
  json report = json::object();
  if (!a.dumps.empty()) report["oas_loss"] = dump_losses(a);
  if (!a.supervision.empty()) report["progress_loss"] = progress_losses(a);
  write_json(a.out, report);
  return 0;
}

// ---------------------------------------------------------------- corr

struct CorrArgs {
  std::string wer;
  std::string oas_report;
  std::vector<std::string> dumps;
  std::size_t k_final = kDefaultFinalTopK;
  std::string out_dir = ".";
};

int run_corr(const CorrArgs& a) {
  require(a.oas_report.empty() != a.dumps.empty(), ErrorCode::invalid_argument,
          "give exactly one of --oas-report or --dump");
  std::vector<UtteranceOas> finals;
  if (!a.oas_report.empty()) {
    const auto j = read_json_file(a.oas_report);
    require(j.contains("per_utterance"), ErrorCode::invalid_argument,
            a.oas_report + " has no per_utterance section (run `oas --per-utterance`)");
    for (const auto& u : j.at("per_utterance"))
      finals.push_back({u.at("utterance_id").get<std::string>(), u.at("final_oas").get<double>()});
  } else {
    const auto corpus = corpus_tables(expand_dumps(a.dumps));
    for (std::size_t i = 0; i < corpus.ids.size(); ++i)
      finals.push_back({corpus.ids[i], final_oas(corpus.tables[i], a.k_final)});
  }
  const auto wer = read_jsonl_by_id(a.wer);
  std::vector<UtteranceRecord> records;
  for (const auto& f : finals) {
    auto it = wer.find(f.utterance_id);
    if (it == wer.end()) {
      warn("no WER for utterance '" + f.utterance_id + "'; skipped");
      continue;
    }
    records.push_back({f.utterance_id, f.final_oas, it->second.at("wer").get<double>()});
  }
  const auto report = oas_wer_report(std::move(records));
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  write_text((dir / "scatter.tsv").string(), scatter_tsv(report));
  write_json((dir / "corr_report.json").string(), corr_report_json(report));
  info("r = " + std::to_string(report.r) + " over " + std::to_string(report.n()) + " utterances");
  return 0;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string out;
  std::size_t n_utts = 300;
  std::size_t speech_len = 32;
  std::size_t text_len = 10;
  std::size_t n_layers = 24;
  std::size_t n_heads = 14;
  std::string planted = "8:0-6,9:0-6";
  std::string path_style = "random-monotone";
  std::string dtype = "f32";
  bool full = false;
  std::optional<double> noise;
};

// "8:0-6,9:0-6" -> {(8,0)..(8,6),(9,0)..(9,6)}; "3:2" -> {(3,2)}.
std::vector<HeadKey> parse_planted(const std::string& spec) {
  std::vector<HeadKey> heads;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    require(colon != std::string::npos, ErrorCode::invalid_argument,
            "planted head '" + item + "' is not LAYER:HEAD or LAYER:FIRST-LAST");
    const std::size_t layer = std::stoul(item.substr(0, colon));
    const std::string range = item.substr(colon + 1);
    const auto dash = range.find('-');
    const std::size_t lo = std::stoul(range.substr(0, dash));
    const std::size_t hi = dash == std::string::npos ? lo : std::stoul(range.substr(dash + 1));
    for (std::size_t h = lo; h <= hi; ++h) heads.push_back({layer, h});
  }
  return heads;
}

int run_synth(const SynthArgs& a) {
  SynthSpec templ;
  templ.speech_len = a.speech_len;
  templ.text_len = a.text_len;
  templ.n_layers = a.n_layers;
  templ.n_heads = a.n_heads;
  templ.planted_heads = a.planted.empty() ? std::vector<HeadKey>{} : parse_planted(a.planted);
  templ.path_style = parse_path_style(a.path_style);
  templ.dtype = parse_dtype(a.dtype);
  templ.sliced = !a.full;
  templ.seed = g_opts.seed;
  write_synth_corpus(a.out, templ, a.n_utts, {}, g_opts.jobs, a.noise);
  info("wrote " + std::to_string(a.n_utts) + " utterances to " + a.out);
  return 0;
}

// ---------------------------------------------------------------- selfcheck

int run_selfcheck() {
  const std::vector<selfcheck::SuiteResult> results{
      selfcheck::viterbi_oracle_suite(),
      selfcheck::oas_gradient_suite(),
      selfcheck::progress_gradient_suite(),
      selfcheck::mask_normalization_suite(),
  };
  bool ok = true;
  json out = json::array();
  for (const auto& r : results) {
    ok = ok && r.passed;
    if (g_opts.json_diagnostics)
      out.push_back({{"suite", r.name},
                     {"passed", r.passed},
                     {"instances", r.instances},
                     {"worst", r.worst},
                     {"seconds", r.seconds},
                     {"detail", r.detail}});
    else
      std::cout << selfcheck::summary_line(r) << "\n";
  }
  if (g_opts.json_diagnostics) std::cout << out.dump(2) << "\n";
  return ok ? 0 : 3;
}

void report_error(const std::string& code, const std::string& message) {
  if (g_opts.json_diagnostics)
    std::cerr << json{{"error", {{"code", code}, {"message", message}}}}.dump() << std::endl;
  else
    std::cerr << "oasalign: error [" << code << "]: " << message << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-speech alignment analysis for attention dumps"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_flag("--json", g_opts.json_diagnostics, "Structured (JSON) diagnostics on stderr");
  app.add_option("--jobs,-j", g_opts.jobs, "Worker threads for per-utterance work")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", g_opts.seed, "Seed for all randomness");

  InspectArgs inspect;
  auto* cmd_inspect = app.add_subcommand("inspect", "Summarize and validate one dump");
  cmd_inspect->add_option("--dump", inspect.dump, "Dump directory")->required();
  cmd_inspect->add_option("--out", inspect.out, "Output JSON (default stdout)");

  OasArgs oas_args;
  auto* cmd_oas = app.add_subcommand("oas", "Per-head OAS report over dumps");
  cmd_oas->add_option("--dump", oas_args.dumps, "Dump or corpus directory (repeatable)")->required();
  cmd_oas->add_option("--out", oas_args.out, "oas_report.json (default stdout)");
  cmd_oas->add_option("--k-layer", oas_args.k_layer, "Heads averaged per layer")
      ->check(CLI::PositiveNumber);
  cmd_oas->add_option("--k-final", oas_args.k_final, "Heads averaged for final OAS")
      ->check(CLI::PositiveNumber);
  cmd_oas->add_flag("--per-utterance", oas_args.per_utterance,
                    "Also report final OAS computed per utterance");

  SelectArgs select;
  auto* cmd_select = app.add_subcommand("select-heads", "Designate alignment heads");
  cmd_select->add_option("--report", select.report, "oas_report.json");
  cmd_select->add_option("--dump", select.dumps, "Dump or corpus directory (repeatable)");
  cmd_select->add_option("--policy", select.policy, "fixed | top")
      ->check(CLI::IsMember({"fixed", "top"}));
  cmd_select->add_option("--layers", select.layers, "Layers for the fixed policy")->delimiter(',');
  cmd_select->add_option("--per-layer", select.per_layer, "Heads per layer (default n_heads/2)");
  cmd_select->add_option("--count", select.count, "Heads for the top policy");
  cmd_select->add_option("--out", select.out, "heads.json (default stdout)");

  PathArgs path;
  auto* cmd_path = app.add_subcommand("path", "Optimal alignment path for one head");
  cmd_path->add_option("--dump", path.dump, "Dump directory")->required();
  cmd_path->add_option("--layer", path.layer, "Layer (default: best-OAS head)");
  cmd_path->add_option("--head", path.head, "Head (default: best-OAS head)");
  cmd_path->add_option("--out", path.out, "path.json (default stdout)");

  SuperviseArgs supervise;
  auto* cmd_supervise = app.add_subcommand("supervise", "Build CoT supervision targets");
  cmd_supervise->add_option("--dump", supervise.dumps, "Dump or corpus directory (repeatable)")
      ->required();
  cmd_supervise->add_option("--tokens", supervise.tokens,
                            "JSON token ids: an array (single dump) or {utterance_id: [...]}")
      ->required();
  cmd_supervise->add_option("--out", supervise.out, "supervision.jsonl (default stdout)");
  cmd_supervise->add_flag("--fallback-corpus-head", supervise.fallback_corpus_head,
                          "Use the corpus-best head when an utterance's best head is degenerate");

  LossArgs loss;
  auto* cmd_loss = app.add_subcommand("loss", "Alignment and progress losses");
  cmd_loss->add_option("--dump", loss.dumps, "Dump or corpus directory (repeatable)");
  cmd_loss->add_option("--heads", loss.heads_file, "heads.json from select-heads");
  cmd_loss->add_option("--policy", loss.policy, "fixed | top (when --heads is absent)")
      ->check(CLI::IsMember({"fixed", "top"}));
  cmd_loss->add_option("--layers", loss.layers, "Layers for the fixed policy")->delimiter(',');
  cmd_loss->add_option("--per-layer", loss.per_layer, "Heads per layer (default n_heads/2)");
  cmd_loss->add_option("--count", loss.count, "Heads for the top policy");
  cmd_loss->add_flag("--floor", loss.floor, "Floor path probabilities at 1e-8 instead of failing");
  cmd_loss->add_option("--supervision", loss.supervision, "supervision.jsonl for the progress loss");
  cmd_loss->add_option("--predictions", loss.predictions, "JSONL {utterance_id, p_hat}");
  cmd_loss->add_option("--positions", loss.positions,
                       "cot: unmasked CoT slots (default) | tokens: one per text token");
  cmd_loss->add_option("--out", loss.out, "loss_report.json (default stdout)");

  CorrArgs corr;
  auto* cmd_corr = app.add_subcommand("corr", "Final OAS vs WER correlation");
  cmd_corr->add_option("--wer", corr.wer, "wer.jsonl")->required();
  cmd_corr->add_option("--oas-report", corr.oas_report, "oas_report.json with per_utterance");
  cmd_corr->add_option("--dump", corr.dumps, "Dump or corpus directory (repeatable)");
  cmd_corr->add_option("--k-final", corr.k_final, "Heads averaged for final OAS")
      ->check(CLI::PositiveNumber);
  cmd_corr->add_option("--out-dir", corr.out_dir, "Directory for scatter.tsv, corr_report.json");

  SynthArgs synth;
  auto* cmd_synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  cmd_synth->add_option("--out", synth.out, "Corpus directory")->required();
  cmd_synth->add_option("--n-utts", synth.n_utts, "Number of utterances");
  cmd_synth->add_option("--speech-len", synth.speech_len, "Speech tokens per utterance");
  cmd_synth->add_option("--text-len", synth.text_len, "Text tokens per utterance");
  cmd_synth->add_option("--layers", synth.n_layers, "Model layers");
  cmd_synth->add_option("--heads", synth.n_heads, "Heads per layer");
  cmd_synth->add_option("--planted", synth.planted, "Planted heads, e.g. 8:0-6,9:0-6");
  cmd_synth->add_option("--path-style", synth.path_style, "diagonal | random-monotone");
  cmd_synth->add_option("--dtype", synth.dtype, "f32 | f64");
  cmd_synth->add_flag("--full", synth.full, "Write full seq_len x seq_len matrices");
  cmd_synth->add_option("--noise", synth.noise, "Fixed noise level instead of uniform draws")
      ->check(CLI::Range(0.0, 1.0));

  app.add_subcommand("selfcheck", "Run oracle and gradient self-checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    report_error("usage", e.what());
    return 2;
  }

  setup_logging();
  try {
    if (*cmd_inspect) return run_inspect(inspect);
    if (*cmd_oas) return run_oas(oas_args);
    if (*cmd_select) return run_select(select);
    if (*cmd_path) return run_path(path);
    if (*cmd_supervise) return run_supervise(supervise);
    if (*cmd_loss) return run_loss(loss);
    if (*cmd_corr) return run_corr(corr);
    if (*cmd_synth) return run_synth(synth);
    return run_selfcheck();
  } catch (const Error& e) {
    report_error(to_string(e.code()), e.what());
  } catch (const json::exception& e) {
    report_error("invalid_argument", e.what());
  } catch (const std::exception& e) {
    report_error("internal", e.what());
  }
  return 1;
}
