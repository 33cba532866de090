#pragma once

#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cgtrack/actionlog.hpp"
#include "cgtrack/blockworld.hpp"
#include "cgtrack/common.hpp"

namespace cgtrack {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Core type <-> JSON. All emitters produce compact objects with nlohmann's
// alphabetical key order, which is what makes file round-trips byte-stable.
// ---------------------------------------------------------------------------

inline json placement_to_json(const Placement& p) {
  json j;
  j["block"] = p.block.text();
  j["x"] = p.anchor.x;
  j["y"] = p.anchor.y;
  j["z"] = p.anchor.z;
  if (p.block.shape == Shape::Long)
    j["orientation"] = p.orientation == Orientation::AlongX ? "x" : "y";
  return j;
}

inline std::optional<Orientation> parse_orientation(std::string_view s) {
  std::string l;
  for (char c : ascii_lower(s))
    if (c != '_' && c != '-' && c != ' ') l += c;
  if (l == "x" || l == "alongx") return Orientation::AlongX;
  if (l == "y" || l == "alongy") return Orientation::AlongY;
  return std::nullopt;
}

inline Placement placement_from_json(
    const json& j,
    const std::vector<std::string>& palette = kDefaultPalette) {
  if (!j.is_object() || !j.contains("block") || !j.contains("x") ||
      !j.contains("y") || !j.contains("z"))
    throw Error(Errc::SchemaError,
                "placement needs block, x, y, z: " + j.dump());
  auto id = parse_block_id(j["block"].get<std::string>(), palette);
  if (!id)
    throw Error(Errc::UnknownBlock,
                "unrecognized block id " + j["block"].get<std::string>());
  Placement p;
  p.block = *id;
  p.anchor = Cell{j["x"].get<int>(), j["y"].get<int>(), j["z"].get<int>()};
  if (j.contains("orientation")) {
    auto o = parse_orientation(j["orientation"].get<std::string>());
    if (!o)
      throw Error(Errc::SchemaError,
                  "unrecognized orientation " +
                      j["orientation"].get<std::string>());
    p.orientation = *o;
  }
  return p;
}

inline json state_to_json(const StructureState& s) {
  json j;
  j["blocks"] = json::array();
  for (const auto& [id, p] : s.placements)
    j["blocks"].push_back(placement_to_json(p));
  if (s.timestamp) j["t"] = *s.timestamp;
  return j;
}

inline StructureState state_from_json(
    const json& j,
    const std::vector<std::string>& palette = kDefaultPalette) {
  if (!j.is_object() || !j.contains("blocks") || !j["blocks"].is_array())
    throw Error(Errc::SchemaError, "state needs a blocks array");
  StructureState s;
  for (const json& pj : j["blocks"]) {
    Placement p = placement_from_json(pj, palette);
    auto [it, inserted] = s.placements.emplace(p.block.text(), p);
    if (!inserted)
      throw Error(Errc::DuplicateBlockId,
                  "block " + p.block.text() + " listed twice");
  }
  if (j.contains("t")) s.timestamp = j["t"].get<double>();
  return s;
}

inline json atom_to_json(const RelationAtom& a) {
  json j;
  j["relation"] = std::string(rel_name(a.rel));
  j["arg1"] = a.arg1;
  j["arg2"] = a.arg2;
  if (a.side) j["side"] = std::string(side_name(*a.side));
  if (a.layer) j["layer"] = *a.layer;
  return j;
}

inline RelationAtom atom_from_json(const json& j) {
  if (!j.is_object() || !j.contains("relation") || !j.contains("arg1") ||
      !j.contains("arg2"))
    throw Error(Errc::SchemaError,
                "relation needs relation, arg1, arg2: " + j.dump());
  auto rel = parse_rel(j["relation"].get<std::string>());
  if (!rel)
    throw Error(Errc::UnknownRelation,
                "unrecognized relation " + j["relation"].get<std::string>());
  RelationAtom a;
  a.rel = *rel;
  a.arg1 = j["arg1"].get<std::string>();
  a.arg2 = j["arg2"].get<std::string>();
  if (j.contains("side")) {
    auto side = parse_side(j["side"].get<std::string>());
    if (!side)
      throw Error(Errc::SchemaError,
                  "unrecognized side " + j["side"].get<std::string>());
    a.side = *side;
  }
  if (j.contains("layer")) a.layer = j["layer"].get<int>();
  return a.canonical();
}

inline json atoms_to_json(const std::set<RelationAtom>& atoms) {
  json arr = json::array();
  for (const RelationAtom& a : atoms) arr.push_back(atom_to_json(a));
  return arr;
}

inline json action_to_json(const ActionEvent& ev) {
  json j;
  j["t"] = ev.timestamp;
  j["action"] = std::string(action_kind_name(ev.kind));
  j["block"] = ev.block.text();
  if (ev.target) j["target"] = placement_to_json(*ev.target);
  if (ev.origin) j["origin"] = placement_to_json(*ev.origin);
  if (ev.side) j["side"] = std::string(side_name(*ev.side));
  if (!ev.relation_summary.empty())
    j["summary"] = atoms_to_json(ev.relation_summary);
  return j;
}

inline ActionEvent action_from_json(
    const json& j,
    const std::vector<std::string>& palette = kDefaultPalette) {
  if (!j.is_object() || !j.contains("t") || !j.contains("action") ||
      !j.contains("block"))
    throw Error(Errc::SchemaError, "action needs t, action, block: " + j.dump());
  ActionEvent ev;
  ev.timestamp = j["t"].get<double>();
  std::string kind = ascii_lower(j["action"].get<std::string>());
  if (kind == "put")
    ev.kind = ActionKind::Put;
  else if (kind == "remove")
    ev.kind = ActionKind::Remove;
  else if (kind == "move")
    ev.kind = ActionKind::Move;
  else
    throw Error(Errc::SchemaError, "unrecognized action kind " + kind);
  auto id = parse_block_id(j["block"].get<std::string>(), palette);
  if (!id)
    throw Error(Errc::UnknownBlock,
                "unrecognized block id " + j["block"].get<std::string>());
  ev.block = *id;
  if (j.contains("target"))
    ev.target = placement_from_json(j["target"], palette);
  if (j.contains("origin"))
    ev.origin = placement_from_json(j["origin"], palette);
  if (j.contains("side")) {
    auto side = parse_side(j["side"].get<std::string>());
    if (!side)
      throw Error(Errc::SchemaError,
                  "unrecognized side " + j["side"].get<std::string>());
    ev.side = *side;
  }
  if (j.contains("summary"))
    for (const json& aj : j["summary"])
      ev.relation_summary.insert(atom_from_json(aj));
  return ev;
}

// View grids serialize as rows from the top layer down, full color tokens,
// "" for empty cells: rows[0][c] is layer 2, column c.
inline json view_to_json(const SideView& v) {
  json j;
  j["side"] = std::string(side_name(v.side));
  json rows = json::array();
  for (int layer = kBoardSize - 1; layer >= 0; --layer) {
    json row = json::array();
    for (int col = 0; col < kBoardSize; ++col) row.push_back(v.at(col, layer));
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  return j;
}

inline SideView view_from_json(
    const json& j, std::optional<Side> expected_side = std::nullopt,
    const std::vector<std::string>& palette = kDefaultPalette) {
  const json* rows = nullptr;
  SideView v;
  if (j.is_array()) {
    rows = &j;
  } else if (j.is_object() && j.contains("rows")) {
    rows = &j["rows"];
    if (j.contains("side")) {
      auto side = parse_side(j["side"].get<std::string>());
      if (!side)
        throw Error(Errc::SchemaError,
                    "unrecognized side " + j["side"].get<std::string>());
      v.side = *side;
    }
  } else {
    throw Error(Errc::BadGridShape, "view grid needs a rows array");
  }
  if (expected_side) v.side = *expected_side;
  const size_t n = static_cast<size_t>(kBoardSize);
  if (!rows->is_array() || rows->size() != n)
    throw Error(Errc::BadGridShape, "view grid needs exactly 3 rows");
  for (size_t r = 0; r < n; ++r) {
    const json& row = (*rows)[r];
    if (!row.is_array() || row.size() != n)
      throw Error(Errc::BadGridShape,
                  "view grid row " + std::to_string(r) + " needs 3 cells");
    for (size_t c = 0; c < n; ++c) {
      if (!row[c].is_string())
        throw Error(Errc::UnknownColorToken,
                    "view cell must be a color token or \"\": " + row[c].dump());
      std::string token = row[c].get<std::string>();
      if (!token.empty() &&
          std::find(palette.begin(), palette.end(), token) == palette.end())
        throw Error(Errc::UnknownColorToken, "unrecognized color " + token);
      int layer = kBoardSize - 1 - static_cast<int>(r);
      v.grid[c][static_cast<size_t>(layer)] = std::move(token);
    }
  }
  return v;
}

// ---------------------------------------------------------------------------
// File I/O. Canonical event files are JSONL with a schema_version header
// line; single-document files are plain JSON with a schema_version key.
// ---------------------------------------------------------------------------

struct JsonlFile {
  json header;
  std::vector<json> records;
  std::vector<size_t> line_numbers;  // 1-based, parallel to records
};

inline JsonlFile read_jsonl(const std::string& path,
                            bool require_header = true) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  JsonlFile out;
  std::string line;
  size_t line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(Errc::SchemaError, path + ":" + std::to_string(line_no) +
                                         ": " + e.what());
    }
    if (!saw_header && j.is_object() && j.contains("schema_version")) {
      if (j["schema_version"].get<int>() != kSchemaVersion)
        throw Error(Errc::SchemaError,
                    path + ": unsupported schema_version " +
                        j["schema_version"].dump());
      out.header = j;
      saw_header = true;
      continue;
    }
    if (!saw_header && require_header)
      throw Error(Errc::SchemaError,
                  path + ": missing schema_version header line");
    saw_header = true;  // tolerant mode: first record implies headerless file
    out.records.push_back(std::move(j));
    out.line_numbers.push_back(line_no);
  }
  return out;
}

inline void write_jsonl(const std::string& path, const std::string& kind,
                        const std::vector<json>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write " + path);
  json header;
  header["kind"] = kind;
  header["schema_version"] = kSchemaVersion;
  out << header.dump() << '\n';
  for (const json& r : records) out << r.dump() << '\n';
  if (!out) throw Error(Errc::IoError, "short write to " + path);
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::SchemaError, path + ": " + e.what());
  }
}

inline void write_json_file(const std::string& path, const json& j,
                            int indent = 2) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write " + path);
  out << j.dump(indent) << '\n';
  if (!out) throw Error(Errc::IoError, "short write to " + path);
}

}  // namespace cgtrack
