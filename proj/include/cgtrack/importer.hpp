#pragma once

// Maps one group's released annotation files onto the canonical schemas.
// Upstream format drift is quarantined here: everything downstream reads
// only the canonical files this module writes. Every source record either
// becomes a canonical record or appears in the import log with a reason,
// so per file imported + skipped = source rows.

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cgtrack/annotations.hpp"
#include "cgtrack/common.hpp"
#include "cgtrack/serialize.hpp"

namespace cgtrack {

struct FileImport {
  std::string source;  // source file name, "(none)" when absent
  std::string dest;    // canonical file name
  size_t source_rows = 0;
  size_t imported = 0;
  size_t skipped = 0;
};

struct ImportResult {
  std::vector<FileImport> files;
  std::filesystem::path log_path;
};

namespace detail {

// A source table: rows as JSON objects keyed by normalized column names,
// plus the original spelling of each column for lossless passthrough.
struct SourceTable {
  std::string file;  // file name within the source dir
  std::vector<std::string> columns;                // normalized
  std::map<std::string, std::string> original;     // normalized -> source
  std::vector<nlohmann::json> rows;                // keyed by normalized
};

inline std::string normalize_column(std::string_view name) {
  std::string out;
  for (char c : name)
    if (c != '_' && c != '-' && c != ' ' && c != '.')
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline void add_column(SourceTable& t, const std::string& raw) {
  const std::string norm = normalize_column(raw);
  if (t.original.emplace(norm, raw).second) t.columns.push_back(norm);
}

inline SourceTable read_csv_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  SourceTable t;
  t.file = path.filename().string();
  std::string line;
  if (!std::getline(in, line))
    return t;  // headerless empty file: zero columns, zero rows
  for (const std::string& cell : split_csv_line(line)) add_column(t, cell);
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    nlohmann::json row = nlohmann::json::object();
    for (size_t i = 0; i < t.columns.size() && i < cells.size(); ++i)
      row[t.columns[i]] = cells[i];
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline SourceTable read_json_table(const std::filesystem::path& path) {
  SourceTable t;
  t.file = path.filename().string();
  std::vector<nlohmann::json> objects;
  if (path.extension() == ".jsonl") {
    std::ifstream in(path);
    if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::SchemaError, path.string() + ":" +
                                           std::to_string(line_no) + ": " +
                                           e.what());
      }
      if (j.is_object() && j.contains("schema_version")) continue;
      objects.push_back(std::move(j));
    }
  } else {
    nlohmann::json doc = read_json_file(path.string());
    if (doc.is_object()) {
      // single wrapper object holding the row array under any key
      for (const auto& [key, value] : doc.items())
        if (value.is_array()) {
          doc = value;
          break;
        }
    }
    if (!doc.is_array())
      throw Error(Errc::SchemaError, path.string() + ": expected an array");
    for (auto& j : doc) objects.push_back(std::move(j));
  }
  for (const auto& obj : objects) {
    // non-object rows become empty rows, later skipped with a reason
    nlohmann::json row = nlohmann::json::object();
    if (obj.is_object())
      for (const auto& [key, value] : obj.items()) {
        add_column(t, key);
        row[normalize_column(key)] = value;
      }
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline SourceTable read_table(const std::filesystem::path& path) {
  if (path.extension() == ".csv") return read_csv_table(path);
  return read_json_table(path);
}

// first column in `aliases` that the table actually has
inline std::optional<std::string> pick_column(
    const SourceTable& t, const std::vector<std::string>& aliases) {
  for (const auto& a : aliases)
    for (const auto& c : t.columns)
      if (c == a) return c;
  return std::nullopt;
}

inline std::optional<double> as_number(const nlohmann::json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    char* end = nullptr;
    const double d = std::strtod(s.c_str(), &end);
    if (end != s.c_str() && *end == '\0') return d;
  }
  return std::nullopt;
}

inline std::optional<std::string> as_string(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  return std::nullopt;
}

inline std::optional<double> field_number(const nlohmann::json& row,
                                          const std::optional<std::string>& col) {
  if (!col || !row.contains(*col)) return std::nullopt;
  return as_number(row.at(*col));
}

inline std::optional<std::string> field_string(
    const nlohmann::json& row, const std::optional<std::string>& col) {
  if (!col || !row.contains(*col)) return std::nullopt;
  return as_string(row.at(*col));
}

struct ImportLog {
  std::vector<nlohmann::json> records;

  void skip(const std::string& file, size_t row, const std::string& reason) {
    records.push_back({{"file", file},
                       {"row", row},
                       {"status", "skipped"},
                       {"reason", reason}});
  }
  void note(const std::string& file, const std::string& text) {
    records.push_back({{"file", file}, {"status", "note"}, {"note", text}});
  }
  void unknown_column(const std::string& file, const std::string& column) {
    records.push_back({{"file", file},
                       {"status", "note"},
                       {"kind", std::string(warn::kUnknownColumn)},
                       {"column", column},
                       {"note", "column passed through as-is"}});
  }
  void summary(const FileImport& f) {
    records.push_back({{"file", f.source},
                       {"dest", f.dest},
                       {"status", "summary"},
                       {"source_rows", f.source_rows},
                       {"imported", f.imported},
                       {"skipped", f.skipped}});
  }
};

// copy columns the mapping did not consume into the canonical row, so the
// import stays lossless; each such column is reported once
inline void passthrough_columns(const SourceTable& t,
                                const std::set<std::string>& consumed,
                                ImportLog& log) {
  for (const auto& c : t.columns)
    if (!consumed.count(c)) log.unknown_column(t.file, t.original.at(c));
}

inline void copy_extras(const SourceTable& t, const nlohmann::json& row,
                        const std::set<std::string>& consumed,
                        const std::set<std::string>& canonical_keys,
                        nlohmann::json& out) {
  for (const auto& c : t.columns) {
    if (consumed.count(c) || !row.contains(c)) continue;
    const std::string& name = t.original.at(c);
    if (!canonical_keys.count(name) && !out.contains(name))
      out[name] = row.at(c);
  }
}

inline std::optional<std::filesystem::path> find_source(
    const std::filesystem::path& dir, const std::vector<std::string>& stems) {
  std::vector<std::filesystem::path> entries;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file()) entries.push_back(e.path());
  std::sort(entries.begin(), entries.end());
  for (const char* ext : {".csv", ".jsonl", ".json"})
    for (const auto& p : entries) {
      if (p.extension() != ext) continue;
      const std::string stem = normalize_column(p.stem().string());
      for (const auto& s : stems)
        if (stem == s) return p;
    }
  return std::nullopt;
}

}  // namespace detail

inline ImportResult import_group(const std::filesystem::path& source_dir,
                                 const std::filesystem::path& dest_dir) {
  if (!std::filesystem::is_directory(source_dir))
    throw Error(Errc::MissingInput,
                "source directory not found: " + source_dir.string());

  const auto speech_src =
      detail::find_source(source_dir, {"speech", "utterances", "propositions", "props"});
  const auto sat_src =
      detail::find_source(source_dir, {"satlog", "sat", "actions", "structure"});
  const auto gesture_src =
      detail::find_source(source_dir, {"gestures", "gesture", "gamr"});
  const auto stance_src =
      detail::find_source(source_dir, {"stances", "stance", "beliefs"});

  if (!speech_src && !sat_src && !gesture_src && !stance_src) {
    std::string listing;
    for (const auto& e : std::filesystem::directory_iterator(source_dir))
      listing += (listing.empty() ? "" : ", ") + e.path().filename().string();
    throw Error(Errc::UnrecognizedLayout,
                "no recognizable annotation files in " + source_dir.string() +
                    " (found: " + (listing.empty() ? "nothing" : listing) + ")");
  }

  std::filesystem::create_directories(dest_dir);
  detail::ImportLog log;
  ImportResult result;

  // --- speech ---------------------------------------------------------
  std::set<std::string> speech_ids;
  {
    FileImport f;
    f.source = speech_src ? speech_src->filename().string() : "(none)";
    f.dest = "speech.jsonl";
    std::vector<nlohmann::json> rows;
    if (speech_src) {
      const auto t = detail::read_table(*speech_src);
      f.source_rows = t.rows.size();
      const auto id_col = detail::pick_column(t, {"id", "propid", "prop", "uid"});
      const auto t_col =
          detail::pick_column(t, {"t", "time", "timestamp", "start", "starttime"});
      const auto who_col =
          detail::pick_column(t, {"speaker", "participant", "director", "who"});
      const auto rel_col = detail::pick_column(t, {"relation", "rel", "predicate"});
      const auto a1_col =
          detail::pick_column(t, {"arg1", "a", "first", "subject", "figure"});
      const auto a2_col =
          detail::pick_column(t, {"arg2", "b", "second", "object", "ground"});
      const auto side_col =
          detail::pick_column(t, {"side", "view", "perspective", "viewpoint"});
      const auto layer_col = detail::pick_column(t, {"layer", "level"});

      std::set<std::string> consumed;
      for (const auto& c : {id_col, t_col, who_col, rel_col, a1_col, a2_col,
                            side_col, layer_col})
        if (c) consumed.insert(*c);
      detail::passthrough_columns(t, consumed, log);
      if (!side_col)
        log.note(t.file, "no side column; side defaulted to front");

      for (size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        const auto tv = detail::field_number(row, t_col);
        const auto who = detail::field_string(row, who_col);
        const auto rel = detail::field_string(row, rel_col);
        const auto a1 = detail::field_string(row, a1_col);
        const auto a2 = detail::field_string(row, a2_col);
        if (!tv || !who || !rel || !a1 || !a2) {
          log.skip(t.file, i, "missing timestamp, speaker, relation, or argument");
          ++f.skipped;
          continue;
        }
        if (!normalize_participant(*who)) {
          log.skip(t.file, i, "unknown speaker " + *who);
          ++f.skipped;
          continue;
        }
        if (!parse_rel(*rel)) {
          log.skip(t.file, i, "unknown relation " + *rel);
          ++f.skipped;
          continue;
        }
        if (!classify_arg(*a1) || !classify_arg(*a2)) {
          log.skip(t.file, i, "argument is not a block, descriptor, or base");
          ++f.skipped;
          continue;
        }
        std::string side = "front";
        if (side_col) {
          const auto sv = detail::field_string(row, side_col);
          if (!sv || !parse_side(*sv)) {
            log.skip(t.file, i, "unrecognized side");
            ++f.skipped;
            continue;
          }
          side = *sv;
        }
        std::string id = "p" + std::to_string(rows.size() + 1);
        if (id_col) {
          if (auto given = detail::field_string(row, id_col); given && !given->empty())
            id = *given;
        }
        if (!speech_ids.insert(id).second) {
          log.skip(t.file, i, "duplicate proposition id " + id);
          ++f.skipped;
          continue;
        }
        nlohmann::json out = {{"id", id},       {"t", *tv},   {"speaker", *who},
                              {"relation", *rel}, {"arg1", *a1}, {"arg2", *a2},
                              {"side", side}};
        if (layer_col)
          if (auto lv = detail::field_number(row, layer_col))
            out["layer"] = static_cast<int>(*lv);
        detail::copy_extras(t, row, consumed,
                            {"id", "t", "speaker", "relation", "arg1", "arg2",
                             "side", "layer"},
                            out);
        rows.push_back(std::move(out));
        ++f.imported;
      }
    } else {
      log.note("(none)", "no speech source; wrote empty speech.jsonl");
    }
    write_jsonl((dest_dir / "speech.jsonl").string(), "speech", rows);
    log.summary(f);
    result.files.push_back(std::move(f));
  }

  // --- structure log --------------------------------------------------
  {
    FileImport f;
    f.source = sat_src ? sat_src->filename().string() : "(none)";
    f.dest = "sat_log.json";
    std::vector<nlohmann::json> rows;
    if (sat_src) {
      const auto t = detail::read_table(*sat_src);
      f.source_rows = t.rows.size();
      const auto t_col = detail::pick_column(t, {"t", "time", "timestamp"});
      const auto block_col = detail::pick_column(t, {"block", "blockid", "id", "name"});
      const auto x_col = detail::pick_column(t, {"x", "col", "column"});
      const auto y_col = detail::pick_column(t, {"y", "row", "depth"});
      const auto z_col = detail::pick_column(t, {"z", "layer", "height"});
      const auto orient_col =
          detail::pick_column(t, {"orientation", "orient", "axis"});
      const auto op_col = detail::pick_column(t, {"action", "op", "event", "kind"});

      std::set<std::string> consumed;
      for (const auto& c : {t_col, block_col, x_col, y_col, z_col, orient_col, op_col})
        if (c) consumed.insert(*c);
      detail::passthrough_columns(t, consumed, log);

      for (size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        const auto tv = detail::field_number(row, t_col);
        const auto block = detail::field_string(row, block_col);
        if (!tv || !block) {
          log.skip(t.file, i, "missing timestamp or block");
          ++f.skipped;
          continue;
        }
        if (!parse_block_id(*block)) {
          log.skip(t.file, i, "unknown block " + *block);
          ++f.skipped;
          continue;
        }
        nlohmann::json out = {{"t", *tv}, {"block", *block}};
        const auto op = detail::field_string(row, op_col);
        const bool removal =
            op && (ascii_lower(*op) == "remove" || ascii_lower(*op) == "delete");
        if (removal) {
          out["remove"] = true;
        } else {
          const auto x = detail::field_number(row, x_col);
          const auto y = detail::field_number(row, y_col);
          const auto z = detail::field_number(row, z_col);
          if (!x || !y || !z) {
            log.skip(t.file, i, "placement lacks x, y, or z");
            ++f.skipped;
            continue;
          }
          out["x"] = static_cast<int>(*x);
          out["y"] = static_cast<int>(*y);
          out["z"] = static_cast<int>(*z);
          if (orient_col) {
            const auto ov = detail::field_string(row, orient_col);
            if (ov && !ov->empty()) {
              if (!parse_orientation(*ov)) {
                log.skip(t.file, i, "bad orientation " + *ov);
                ++f.skipped;
                continue;
              }
              out["orientation"] = *ov;
            }
          }
        }
        detail::copy_extras(t, row, consumed,
                            {"t", "block", "x", "y", "z", "orientation", "remove"},
                            out);
        rows.push_back(std::move(out));
        ++f.imported;
      }
      std::stable_sort(rows.begin(), rows.end(),
                       [](const nlohmann::json& a, const nlohmann::json& b) {
                         return a["t"].get<double>() < b["t"].get<double>();
                       });
    } else {
      log.note("(none)", "no structure log source; wrote empty sat_log.json");
    }
    nlohmann::json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["rows"] = rows;
    write_json_file((dest_dir / "sat_log.json").string(), doc);
    log.summary(f);
    result.files.push_back(std::move(f));
  }

  // --- gestures ---------------------------------------------------------
  {
    FileImport f;
    f.source = gesture_src ? gesture_src->filename().string() : "(none)";
    f.dest = "gestures.jsonl";
    std::vector<nlohmann::json> rows;
    if (gesture_src) {
      const auto t = detail::read_table(*gesture_src);
      f.source_rows = t.rows.size();
      const auto start_col = detail::pick_column(
          t, {"tstart", "start", "begin", "t0", "starttime"});
      const auto end_col =
          detail::pick_column(t, {"tend", "end", "stop", "t1", "endtime"});
      const auto gamr_col =
          detail::pick_column(t, {"gamr", "graph", "annotation", "amr"});

      std::set<std::string> consumed;
      for (const auto& c : {start_col, end_col, gamr_col})
        if (c) consumed.insert(*c);
      detail::passthrough_columns(t, consumed, log);

      for (size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        const auto t0 = detail::field_number(row, start_col);
        const auto t1 = detail::field_number(row, end_col);
        const auto graph = detail::field_string(row, gamr_col);
        if (!t0 || !t1 || !graph) {
          log.skip(t.file, i, "missing span or gesture graph");
          ++f.skipped;
          continue;
        }
        if (*t1 < *t0) {
          log.skip(t.file, i, "gesture ends before it starts");
          ++f.skipped;
          continue;
        }
        try {
          parse_gamr(*graph);
        } catch (const Error& e) {
          log.skip(t.file, i, std::string("unusable gesture graph: ") + e.what());
          ++f.skipped;
          continue;
        }
        nlohmann::json out = {{"t_start", *t0}, {"t_end", *t1}, {"gamr", *graph}};
        detail::copy_extras(t, row, consumed, {"t_start", "t_end", "gamr"}, out);
        rows.push_back(std::move(out));
        ++f.imported;
      }
    } else {
      log.note("(none)", "no gesture source; wrote empty gestures.jsonl");
    }
    write_jsonl((dest_dir / "gestures.jsonl").string(), "gestures", rows);
    log.summary(f);
    result.files.push_back(std::move(f));
  }

  // --- stances ----------------------------------------------------------
  {
    FileImport f;
    f.source = stance_src ? stance_src->filename().string() : "(none)";
    f.dest = "stances.jsonl";
    std::vector<nlohmann::json> rows;
    if (stance_src) {
      const auto t = detail::read_table(*stance_src);
      f.source_rows = t.rows.size();
      const auto t_col = detail::pick_column(t, {"t", "time", "timestamp"});
      const auto who_col =
          detail::pick_column(t, {"participant", "who", "speaker", "annotator"});
      const auto prop_col =
          detail::pick_column(t, {"propid", "prop", "target", "proposition"});
      const auto stance_col =
          detail::pick_column(t, {"stance", "label", "value", "polarity"});

      std::set<std::string> consumed;
      for (const auto& c : {t_col, who_col, prop_col, stance_col})
        if (c) consumed.insert(*c);
      detail::passthrough_columns(t, consumed, log);

      for (size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        const auto tv = detail::field_number(row, t_col);
        const auto who = detail::field_string(row, who_col);
        const auto prop = detail::field_string(row, prop_col);
        const auto st = detail::field_string(row, stance_col);
        if (!tv || !who || !prop || !st) {
          log.skip(t.file, i, "missing timestamp, participant, target, or stance");
          ++f.skipped;
          continue;
        }
        if (!normalize_participant(*who)) {
          log.skip(t.file, i, "unknown participant " + *who);
          ++f.skipped;
          continue;
        }
        if (!parse_stance(*st)) {
          log.skip(t.file, i, "unknown stance " + *st);
          ++f.skipped;
          continue;
        }
        if (!speech_ids.count(*prop)) {
          log.skip(t.file, i, "references unknown proposition " + *prop);
          ++f.skipped;
          continue;
        }
        nlohmann::json out = {
            {"participant", *who}, {"prop_id", *prop}, {"stance", *st}, {"t", *tv}};
        detail::copy_extras(t, row, consumed,
                            {"participant", "prop_id", "stance", "t"}, out);
        rows.push_back(std::move(out));
        ++f.imported;
      }
    } else {
      log.note("(none)", "no stance source; wrote empty stances.jsonl");
    }
    write_jsonl((dest_dir / "stances.jsonl").string(), "stances", rows);
    log.summary(f);
    result.files.push_back(std::move(f));
  }

  result.log_path = dest_dir / "import_log.jsonl";
  write_jsonl(result.log_path.string(), "import_log", log.records);
  return result;
}

}  // namespace cgtrack
