#pragma once

// JSON / JSONL shapes written and read by the command-line tool.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oasalign/corpus_stats.hpp"
#include "oasalign/losses.hpp"
#include "oasalign/oas.hpp"
#include "oasalign/supervision.hpp"

namespace oasalign {

inline nlohmann::json table_json(const OasTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t l = 0; l < table.rows(); ++l) {
    auto r = table.row(l);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return rows;
}

inline OasTable table_from_json(const nlohmann::json& rows) {
  require(rows.is_array() && !rows.empty(), ErrorCode::invalid_argument,
          "per_head must be a non-empty array of rows");
  OasTable table(rows.size(), rows[0].size());
  for (std::size_t l = 0; l < rows.size(); ++l) {
    require(rows[l].size() == table.cols(), ErrorCode::shape_mismatch, "ragged per_head table");
    for (std::size_t h = 0; h < table.cols(); ++h) table(l, h) = rows[l][h].get<double>();
  }
  return table;
}

struct UtteranceOas {
  std::string utterance_id;
  double final_oas = 0.0;
};

struct OasReport {
  OasTable per_head;
  std::size_t k_layer = kDefaultLayerTopK;
  std::size_t k_final = kDefaultFinalTopK;
  std::size_t n_utts = 0;
  /// Filled only when the per-utterance variant is requested.
  std::vector<UtteranceOas> per_utterance;
};

inline OasReport make_oas_report(const std::vector<std::string>& ids,
                                 const std::vector<OasTable>& tables, std::size_t k_layer,
                                 std::size_t k_final, bool per_utterance) {
  OasReport r;
  r.per_head = mean_table(tables);
  r.k_layer = k_layer;
  r.k_final = k_final;
  r.n_utts = tables.size();
  if (per_utterance)
    for (std::size_t i = 0; i < tables.size(); ++i)
      r.per_utterance.push_back({ids[i], final_oas(tables[i], k_final)});
  return r;
}

inline nlohmann::json oas_report_json(const OasReport& r) {
  nlohmann::json j = {{"per_head", table_json(r.per_head)},
                      {"per_layer_top7", layer_topk_mean(r.per_head, r.k_layer)},
                      {"final_oas", final_oas(r.per_head, r.k_final)},
                      {"k_layer", r.k_layer},
                      {"k_final", r.k_final},
                      {"n_utts", r.n_utts},
                      {"aggregation", "unweighted_mean_over_utterances"}};
  if (!r.per_utterance.empty()) {
    nlohmann::json list = nlohmann::json::array();
    double acc = 0.0;
    for (const auto& u : r.per_utterance) {
      list.push_back({{"utterance_id", u.utterance_id}, {"final_oas", u.final_oas}});
      acc += u.final_oas;
    }
    j["per_utterance"] = list;
    j["final_oas_per_utterance_mean"] = acc / static_cast<double>(r.per_utterance.size());
  }
  return j;
}

inline nlohmann::json head_set_json(const HeadSet& set, const OasTable& table) {
  nlohmann::json heads = nlohmann::json::array();
  for (const auto& k : set.heads)
    heads.push_back({{"layer", k.layer}, {"head", k.head}, {"oas", table(k.layer, k.head)}});
  return {{"policy", set.policy}, {"heads", heads}};
}

inline HeadSet head_set_from_json(const nlohmann::json& j) {
  HeadSet set;
  set.policy = j.value("policy", "");
  for (const auto& h : j.at("heads"))
    set.heads.push_back({h.at("layer").get<std::size_t>(), h.at("head").get<std::size_t>()});
  std::sort(set.heads.begin(), set.heads.end());
  return set;
}

inline nlohmann::json path_json(const std::string& utterance_id, HeadKey head,
                                const AlignmentPath& path) {
  return {{"utterance_id", utterance_id},
          {"layer", head.layer},
          {"head", head.head},
          {"path", path.indices},
          {"durations", path_to_durations(path)}};
}

struct TeacherChoice {
  HeadKey head;
  double oas = 0.0;
};

inline nlohmann::json supervision_record(const std::string& utterance_id,
                                         const TeacherChoice& teacher,
                                         const SupervisionBundle& b, std::uint64_t seed) {
  nlohmann::json o_p = nlohmann::json::array();
  for (const auto& v : b.o_p) o_p.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
  return {{"utterance_id", utterance_id},
          {"teacher_layer", teacher.head.layer},
          {"teacher_head", teacher.head.head},
          {"teacher_oas", teacher.oas},
          {"durations", b.durations},
          {"o_w", b.o_w},
          {"o_s", b.o_s.serialized()},
          {"o_p", o_p},
          {"seed", seed}};
}

/// Reads `{"utterance_id", key}` JSONL records into an id -> value map.
inline std::map<std::string, nlohmann::json> read_jsonl_by_id(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io_failure, "cannot open " + path.string());
  std::map<std::string, nlohmann::json> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    require(!j.is_discarded() && j.is_object() && j.contains("utterance_id"),
            ErrorCode::invalid_argument,
            path.string() + ":" + std::to_string(line_no) + ": not a record with utterance_id");
    auto id = j["utterance_id"].get<std::string>();
    require(out.emplace(id, std::move(j)).second, ErrorCode::duplicate_id,
            path.string() + ": duplicate utterance id '" + id + "'");
  }
  return out;
}

}  // namespace oasalign
