#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "chartrl/chart_type.hpp"
#include "chartrl/errors.hpp"
#include "chartrl/normalizer.hpp"

namespace chartrl {

struct RecordMeta {
  std::vector<std::string> chart_types;
  std::string data_format;
  std::string source;
};

/// One chart-code pair. Corpora are line-delimited JSON with fields
/// {id, code, image, meta}; `image` is a path relative to the corpus file.
struct CorpusRecord {
  std::string id;
  std::string code;
  std::optional<std::string> image_path;
  RecordMeta meta;

  PlotScript script(ScriptOrigin origin = ScriptOrigin::reference) const { return PlotScript{code, origin}; }
};

/// Recomputes chart_types and data_format from the code. Input meta other
/// than `source` is never trusted. Unparseable code gets data_format
/// "parse_error" and no types.
inline void populate_meta(CorpusRecord& r) {
  r.meta.chart_types.clear();
  try {
    const ScriptAnalysis a = analyze(r.script());
    for (auto t : identify_chart_types(a.spec)) r.meta.chart_types.emplace_back(to_string(t));
    r.meta.data_format = std::string(to_string(classify_data_format(a)));
  } catch (const ParseError&) {
    r.meta.data_format = "parse_error";
  }
}

inline nlohmann::json to_json(const CorpusRecord& r) {
  nlohmann::json j = {{"id", r.id}, {"code", r.code}};
  j["image"] = r.image_path ? nlohmann::json(*r.image_path) : nlohmann::json(nullptr);
  j["meta"] = {{"chart_types", r.meta.chart_types}, {"data_format", r.meta.data_format}, {"source", r.meta.source}};
  return j;
}

/// Parses one corpus line. Throws ValidationError naming `where` on bad input.
inline CorpusRecord record_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + ": record is not an object");
  if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty()) {
    throw ValidationError(where + ": missing string field 'id'");
  }
  if (!j.contains("code") || !j["code"].is_string()) throw ValidationError(where + ": missing string field 'code'");
  CorpusRecord r;
  r.id = j["id"].get<std::string>();
  r.code = j["code"].get<std::string>();
  if (j.contains("image") && j["image"].is_string()) r.image_path = j["image"].get<std::string>();
  if (j.contains("meta") && j["meta"].is_object() && j["meta"].contains("source") && j["meta"]["source"].is_string()) {
    r.meta.source = j["meta"]["source"].get<std::string>();
  }
  return r;
}

inline std::vector<CorpusRecord> parse_corpus(std::istream& in, const std::string& name = "corpus") {
  std::vector<CorpusRecord> out;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = name + ":" + std::to_string(lineno);
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ValidationError(where + ": invalid JSON");
    CorpusRecord r = record_from_json(j, where);
    if (!seen.insert(r.id).second) throw ValidationError(where + ": duplicate id '" + r.id + "'");
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<CorpusRecord> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read corpus " + path.string());
  return parse_corpus(in, path.string());
}

inline void write_corpus(std::ostream& out, const std::vector<CorpusRecord>& records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

inline void write_corpus(const std::filesystem::path& path, const std::vector<CorpusRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  write_corpus(out, records);
}

}  // namespace chartrl
