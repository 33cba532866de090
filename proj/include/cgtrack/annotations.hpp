#pragma once

#include <cctype>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cgtrack/actionlog.hpp"
#include "cgtrack/blockworld.hpp"
#include "cgtrack/common.hpp"
#include "cgtrack/serialize.hpp"

namespace cgtrack {

// ---------------------------------------------------------------------------
// Descriptors: color+shape terms that have not been tied to a block yet.
// Canonical text form is "BlueShort"; parsing tolerates case and a trailing
// "Block" ("blue short block" annotations arrive squeezed).
// ---------------------------------------------------------------------------

struct Descriptor {
  std::string color;
  Shape shape = Shape::Short;

  bool operator==(const Descriptor&) const = default;

  std::string text() const {
    std::string c = color;
    if (!c.empty()) c[0] = static_cast<char>(std::toupper(c[0]));
    return c + (shape == Shape::Short ? "Short" : "Long");
  }
};

inline std::optional<Descriptor> parse_descriptor(
    std::string_view raw,
    const std::vector<std::string>& palette = kDefaultPalette) {
  std::string s;
  for (char c : ascii_lower(raw))
    if (c != ' ' && c != '_' && c != '-') s += c;
  if (s.size() > 5 && s.substr(s.size() - 5) == "block")
    s = s.substr(0, s.size() - 5);
  for (const auto& color : palette) {
    if (s.rfind(color, 0) != 0) continue;
    std::string rest = s.substr(color.size());
    if (rest == "short" || rest == "small" || rest == "square")
      return Descriptor{color, Shape::Short};
    if (rest == "long" || rest == "big" || rest == "rectangle")
      return Descriptor{color, Shape::Long};
  }
  return std::nullopt;
}

enum class ArgKind { Block, DescriptorTerm, Base, ColorToken };

// Classifies and canonicalizes one relation argument. Unrecognized text is
// a schema problem at the call site.
inline std::optional<std::pair<ArgKind, std::string>> classify_arg(
    const std::string& arg,
    const std::vector<std::string>& palette = kDefaultPalette) {
  if (ascii_lower(arg) == kBaseArg) return {{ArgKind::Base, std::string(kBaseArg)}};
  if (auto id = parse_block_id(arg, palette))
    return {{ArgKind::Block, id->text()}};
  if (auto d = parse_descriptor(arg, palette))
    return {{ArgKind::DescriptorTerm, d->text()}};
  for (const auto& color : palette)
    if (ascii_lower(arg) == color) return {{ArgKind::ColorToken, color}};
  return std::nullopt;
}

inline bool arg_is_descriptor(const std::string& arg,
                              const std::vector<std::string>& palette =
                                  kDefaultPalette) {
  auto c = classify_arg(arg, palette);
  return c && c->first == ArgKind::DescriptorTerm;
}

// ---------------------------------------------------------------------------
// Group configuration: which director sits on which side, and the palette.
// group.json is optional; defaults are D1=front, D2=left, D3=right.
// ---------------------------------------------------------------------------

struct GroupConfig {
  SideAssignment sides;
  std::vector<std::string> palette = kDefaultPalette;
};

inline GroupConfig load_group_config(const std::filesystem::path& group_dir) {
  GroupConfig cfg;
  auto path = group_dir / "group.json";
  if (!std::filesystem::exists(path)) return cfg;
  json j = read_json_file(path.string());
  if (j.contains("sides")) {
    for (const auto& [who, side_str] : j["sides"].items()) {
      auto who_norm = normalize_participant(who);
      auto side = parse_side(side_str.get<std::string>());
      if (!who_norm || !side)
        throw Error(Errc::SchemaError,
                    path.string() + ": bad side entry " + who + "=" +
                        side_str.dump());
      if (*who_norm == "D1") cfg.sides.d1 = *side;
      else if (*who_norm == "D2") cfg.sides.d2 = *side;
      else if (*who_norm == "D3") cfg.sides.d3 = *side;
      else
        throw Error(Errc::SchemaError,
                    path.string() + ": only directors hold sides, got " + who);
    }
    if (!cfg.sides.valid())
      throw Error(Errc::SchemaError,
                  path.string() + ": side assignment is not a bijection");
  }
  if (j.contains("palette")) {
    cfg.palette = j["palette"].get<std::vector<std::string>>();
    if (!palette_valid(cfg.palette))
      throw Error(Errc::SchemaError,
                  path.string() + ": palette needs distinct initials");
  }
  return cfg;
}

// Resolves a record's side field: a side name, or a director whose assigned
// side is looked up.
inline Side resolve_side_field(const std::string& value,
                               const SideAssignment& sides) {
  if (auto side = parse_side(value)) return *side;
  if (auto who = normalize_participant(value)) {
    if (auto side = sides.side_of(*who)) return *side;
    throw Error(Errc::SchemaError,
                "the builder holds no side view: side=" + value);
  }
  throw Error(Errc::SchemaError, "unrecognized side " + value);
}

// ---------------------------------------------------------------------------
// Speech propositions.
// ---------------------------------------------------------------------------

struct Proposition {
  std::string id;
  double timestamp = 0.0;
  std::string speaker;
  RelationAtom relation;  // canonical; arguments may still be descriptors
  Side side = Side::Front;  // viewpoint the utterance was made from
  std::vector<std::string> grounding_notes;

  bool has_descriptor(const std::vector<std::string>& palette =
                          kDefaultPalette) const {
    return arg_is_descriptor(relation.arg1, palette) ||
           arg_is_descriptor(relation.arg2, palette);
  }
};

inline json prop_to_json(const Proposition& p) {
  json j;
  j["id"] = p.id;
  j["t"] = p.timestamp;
  j["speaker"] = p.speaker;
  j["relation"] = std::string(rel_name(p.relation.rel));
  j["arg1"] = p.relation.arg1;
  j["arg2"] = p.relation.arg2;
  j["side"] = std::string(side_name(p.side));
  if (p.relation.layer) j["layer"] = *p.relation.layer;
  return j;
}

inline std::vector<Proposition> parse_speech_props(
    const std::string& path, const GroupConfig& cfg = {}) {
  auto file = read_jsonl(path);
  std::vector<Proposition> props;
  std::set<std::string> seen_ids;
  for (size_t i = 0; i < file.records.size(); ++i) {
    const json& j = file.records[i];
    const std::string where = path + ":" + std::to_string(file.line_numbers[i]);
    for (const char* key : {"id", "t", "speaker", "relation", "arg1", "arg2",
                            "side"})
      if (!j.contains(key))
        throw Error(Errc::SchemaError, where + ": missing field " + key);

    Proposition p;
    p.id = j["id"].get<std::string>();
    if (!seen_ids.insert(p.id).second)
      throw Error(Errc::SchemaError, where + ": duplicate id " + p.id);
    p.timestamp = j["t"].get<double>();

    auto speaker = normalize_participant(j["speaker"].get<std::string>());
    if (!speaker)
      throw Error(Errc::UnknownParticipant,
                  where + ": " + j["speaker"].get<std::string>());
    p.speaker = *speaker;

    auto rel = parse_rel(j["relation"].get<std::string>());
    if (!rel)
      throw Error(Errc::UnknownRelation,
                  where + ": " + j["relation"].get<std::string>());

    auto a1 = classify_arg(j["arg1"].get<std::string>(), cfg.palette);
    auto a2 = classify_arg(j["arg2"].get<std::string>(), cfg.palette);
    if (!a1 || !a2)
      throw Error(Errc::SchemaError,
                  where + ": argument is not a block, descriptor, or base");

    p.side = resolve_side_field(j["side"].get<std::string>(), cfg.sides);

    RelationAtom atom;
    atom.rel = *rel;
    atom.arg1 = a1->second;
    atom.arg2 = a2->second;
    if (rel_is_side_dependent(*rel)) atom.side = p.side;
    if (j.contains("layer")) atom.layer = j["layer"].get<int>();
    p.relation = atom.canonical();
    props.push_back(std::move(p));
  }
  return props;
}

// ---------------------------------------------------------------------------
// SAT structure logs. Rows are cumulative: the board at time T is the
// effect of all rows with t <= T, later rows superseding earlier ones for
// the same block, and {"remove": true} rows erasing a block.
// ---------------------------------------------------------------------------

struct SatRow {
  double t = 0.0;
  std::string block;
  std::optional<Placement> placement;  // empty for remove rows
  bool remove = false;
  size_t line = 0;
};

struct SatLog {
  std::vector<SatRow> rows;
  std::vector<Snapshot> snapshots;
  std::vector<Warning> warnings;
};

inline json sat_row_to_json(const SatRow& r) {
  json j;
  j["t"] = r.t;
  j["block"] = r.block;
  if (r.remove) {
    j["remove"] = true;
  } else {
    j["x"] = r.placement->anchor.x;
    j["y"] = r.placement->anchor.y;
    j["z"] = r.placement->anchor.z;
    if (r.placement->block.shape == Shape::Long)
      j["orientation"] =
          r.placement->orientation == Orientation::AlongX ? "x" : "y";
  }
  return j;
}

inline SatLog parse_sat_log(const std::string& path,
                            const GroupConfig& cfg = {}) {
  json doc = read_json_file(path);
  if (!doc.is_object() || !doc.contains("rows") || !doc["rows"].is_array())
    throw Error(Errc::SchemaError, path + ": needs a rows array");

  SatLog log;
  double prev_t = -1e300;
  std::map<std::string, size_t> row_of_block;  // last row placing each block

  for (size_t i = 0; i < doc["rows"].size(); ++i) {
    const json& j = doc["rows"][i];
    const std::string where = path + ": rows[" + std::to_string(i) + "]";
    if (!j.contains("t") || !j.contains("block"))
      throw Error(Errc::SchemaError, where + ": needs t and block");

    SatRow row;
    row.t = j["t"].get<double>();
    row.line = i;
    if (row.t < prev_t)
      throw Error(Errc::NonMonotonicTimestamps,
                  where + ": t=" + std::to_string(row.t) + " after t=" +
                      std::to_string(prev_t));
    prev_t = row.t;

    row.block = j["block"].get<std::string>();
    auto id = parse_block_id(row.block, cfg.palette);
    if (!id) throw Error(Errc::UnknownBlock, where + ": " + row.block);

    if (j.contains("remove") && j["remove"].get<bool>()) {
      row.remove = true;
    } else {
      if (!j.contains("x") || !j.contains("y") || !j.contains("z"))
        throw Error(Errc::SchemaError, where + ": needs x, y, z");
      Placement p;
      p.block = *id;
      p.anchor = Cell{j["x"].get<int>(), j["y"].get<int>(), j["z"].get<int>()};
      if (j.contains("orientation")) {
        auto o = parse_orientation(j["orientation"].get<std::string>());
        if (!o)
          throw Error(Errc::SchemaError,
                      where + ": bad orientation " +
                          j["orientation"].get<std::string>());
        p.orientation = *o;
      }
      row.placement = p;
    }
    log.rows.push_back(std::move(row));
  }

  // Fold rows into one snapshot per distinct timestamp.
  std::map<std::string, std::pair<Placement, size_t>> board;
  for (size_t i = 0; i < log.rows.size(); ++i) {
    const SatRow& row = log.rows[i];
    if (row.remove)
      board.erase(row.block);
    else
      board[row.block] = {*row.placement, i};

    bool last_at_t =
        i + 1 == log.rows.size() || log.rows[i + 1].t != row.t;
    if (!last_at_t) continue;

    Snapshot snap;
    snap.timestamp = row.t;
    for (const auto& [id, entry] : board) snap.placements.push_back(entry.first);
    auto issues = snap.state().validate();
    for (Warning w : issues) {
      // name the rows involved so a human can find them
      std::string rows_ctx;
      for (const auto& [id, entry] : board)
        if (w.message.find(id) != std::string::npos)
          rows_ctx += (rows_ctx.empty() ? "rows " : ", ") +
                      std::to_string(entry.second);
      w.context = rows_ctx;
      log.warnings.push_back(std::move(w));
    }
    log.snapshots.push_back(std::move(snap));
  }
  return log;
}

// ---------------------------------------------------------------------------
// Gesture annotations (GAMR-lite).
// ---------------------------------------------------------------------------

enum class GestureKind { Deixis, Iconic, Emblem };
enum class Polarity { Confirm, Deny };

struct GestureEvent {
  std::string id;
  double t_start = 0.0;
  double t_end = 0.0;
  std::string gesturer;
  GestureKind kind = GestureKind::Iconic;
  std::optional<std::string> target;  // block id, descriptor, or "group"
  std::optional<Polarity> polarity;   // emblems only
  std::string addressee = "group";
  std::string meaning;  // raw concept token for iconic frames
  std::string raw;      // original s-expression, kept for round-trips
};

namespace gamr {

struct Node {
  std::string var;
  std::string head;
  std::vector<std::pair<std::string, Node>> roles;  // atom values get empty roles
  bool is_atom = false;  // atom: head holds the bare token
};

inline void skip_ws(std::string_view s, size_t& i) {
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\n' ||
                          s[i] == '\r'))
    ++i;
}

inline std::string read_token(std::string_view s, size_t& i) {
  size_t start = i;
  while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != '\n' &&
         s[i] != '\r' && s[i] != '(' && s[i] != ')')
    ++i;
  return std::string(s.substr(start, i - start));
}

inline Node parse_node(std::string_view s, size_t& i) {
  skip_ws(s, i);
  if (i >= s.size() || s[i] != '(')
    throw Error(Errc::MalformedGraph, "expected ( in gesture graph");
  ++i;
  skip_ws(s, i);
  Node n;
  n.var = read_token(s, i);
  if (n.var.empty())
    throw Error(Errc::MalformedGraph, "expected variable after (");
  skip_ws(s, i);
  if (i >= s.size() || s[i] != '/')
    throw Error(Errc::MalformedGraph, "expected / after variable " + n.var);
  ++i;
  skip_ws(s, i);
  n.head = read_token(s, i);
  if (n.head.empty())
    throw Error(Errc::MalformedGraph, "expected concept after /");
  skip_ws(s, i);
  while (i < s.size() && s[i] == ':') {
    ++i;
    std::string role = read_token(s, i);
    if (role.empty()) throw Error(Errc::MalformedGraph, "empty role name");
    skip_ws(s, i);
    if (i < s.size() && s[i] == '(') {
      n.roles.emplace_back(role, parse_node(s, i));
    } else {
      Node atom;
      atom.is_atom = true;
      atom.head = read_token(s, i);
      if (atom.head.empty())
        throw Error(Errc::MalformedGraph, "role :" + role + " has no value");
      n.roles.emplace_back(role, std::move(atom));
    }
    skip_ws(s, i);
  }
  if (i >= s.size() || s[i] != ')')
    throw Error(Errc::MalformedGraph, "unclosed node " + n.var);
  ++i;
  return n;
}

inline Node parse(std::string_view s) {
  size_t i = 0;
  Node n = parse_node(s, i);
  skip_ws(s, i);
  if (i != s.size())
    throw Error(Errc::MalformedGraph, "trailing text after gesture graph");
  return n;
}

// Maps a GAMR concept to a timeline entity: participants, indexed block
// concepts ("blue-square-1" -> bs1), unindexed ones to descriptors
// ("blue-square" -> BlueShort), "group" and anything else verbatim.
inline std::string resolve_entity(
    const std::string& token,
    const std::vector<std::string>& palette = kDefaultPalette) {
  if (auto who = normalize_participant(token)) return *who;
  std::string l = ascii_lower(token);
  if (l == "group" || l == "everyone") return "group";

  // <color>-<shapeword>[-<index>]
  for (const auto& color : palette) {
    if (l.rfind(color + "-", 0) != 0) continue;
    std::string rest = l.substr(color.size() + 1);
    std::string shape_word = rest;
    std::optional<int> index;
    if (auto dash = rest.find('-'); dash != std::string::npos) {
      shape_word = rest.substr(0, dash);
      std::string num = rest.substr(dash + 1);
      if (!num.empty() &&
          num.find_first_not_of("0123456789") == std::string::npos)
        index = std::stoi(num);
    }
    std::optional<Shape> shape;
    if (shape_word == "square" || shape_word == "short" ||
        shape_word == "small")
      shape = Shape::Short;
    if (shape_word == "rectangle" || shape_word == "long" ||
        shape_word == "big")
      shape = Shape::Long;
    if (!shape) break;
    if (index) return BlockId{color, *shape, *index}.text();
    return Descriptor{color, *shape}.text();
  }
  return token;
}

inline const Node* find_role(const Node& n, const std::string& role) {
  for (const auto& [name, value] : n.roles)
    if (name == role) return &value;
  return nullptr;
}

}  // namespace gamr

// Interprets one GAMR-lite s-expression. Deixis frames need ARG0 (gesturer)
// and ARG1 (target); head movements become emblems with polarity;
// everything else is an opaque iconic frame.
inline GestureEvent parse_gamr(
    const std::string& text,
    const std::vector<std::string>& palette = kDefaultPalette) {
  gamr::Node root = gamr::parse(text);
  GestureEvent ev;
  ev.raw = text;

  std::string frame = ascii_lower(root.head);
  const gamr::Node* arg0 = gamr::find_role(root, "ARG0");
  if (!arg0)
    throw Error(Errc::MissingRole, "gesture graph lacks ARG0: " + text);
  std::string gesturer = gamr::resolve_entity(arg0->head, palette);
  if (!is_participant(gesturer))
    throw Error(Errc::UnknownParticipant,
                "ARG0 is not a participant: " + arg0->head);
  ev.gesturer = gesturer;

  if (const gamr::Node* arg2 = gamr::find_role(root, "ARG2"))
    ev.addressee = gamr::resolve_entity(arg2->head, palette);

  if (frame == "deixis-ga" || frame == "deixis") {
    ev.kind = GestureKind::Deixis;
    const gamr::Node* arg1 = gamr::find_role(root, "ARG1");
    if (!arg1)
      throw Error(Errc::MissingRole, "deixis lacks ARG1: " + text);
    ev.target = gamr::resolve_entity(arg1->head, palette);
  } else if (frame.find("nod") != std::string::npos) {
    ev.kind = GestureKind::Emblem;
    ev.polarity = Polarity::Confirm;
  } else if (frame.find("shake") != std::string::npos) {
    ev.kind = GestureKind::Emblem;
    ev.polarity = Polarity::Deny;
  } else {
    ev.kind = GestureKind::Iconic;
    ev.meaning = root.head;
    if (const gamr::Node* arg1 = gamr::find_role(root, "ARG1"))
      ev.target = gamr::resolve_entity(arg1->head, palette);
  }
  return ev;
}

inline json gesture_to_json(const GestureEvent& g) {
  json j;
  j["gamr"] = g.raw;
  j["t_end"] = g.t_end;
  j["t_start"] = g.t_start;
  return j;
}

inline std::vector<GestureEvent> parse_gestures(
    const std::string& path, const GroupConfig& cfg = {}) {
  auto file = read_jsonl(path);
  std::vector<GestureEvent> out;
  for (size_t i = 0; i < file.records.size(); ++i) {
    const json& j = file.records[i];
    const std::string where = path + ":" + std::to_string(file.line_numbers[i]);
    if (!j.contains("t_start") || !j.contains("t_end") || !j.contains("gamr"))
      throw Error(Errc::SchemaError, where + ": needs t_start, t_end, gamr");
    GestureEvent ev = parse_gamr(j["gamr"].get<std::string>(), cfg.palette);
    ev.id = "g" + std::to_string(out.size());
    ev.t_start = j["t_start"].get<double>();
    ev.t_end = j["t_end"].get<double>();
    if (ev.t_start > ev.t_end)
      throw Error(Errc::SchemaError, where + ": t_start exceeds t_end");
    out.push_back(std::move(ev));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Belief stance labels.
// ---------------------------------------------------------------------------

enum class Stance { Accept, Doubt, Negate };

inline std::string_view stance_name(Stance s) {
  switch (s) {
    case Stance::Accept: return "accept";
    case Stance::Doubt: return "doubt";
    case Stance::Negate: return "negate";
  }
  return "accept";
}

inline std::optional<Stance> parse_stance(std::string_view s) {
  std::string l = ascii_lower(s);
  if (l == "accept") return Stance::Accept;
  if (l == "doubt") return Stance::Doubt;
  if (l == "negate") return Stance::Negate;
  return std::nullopt;
}

struct StanceLabel {
  std::string id;
  double timestamp = 0.0;
  std::string participant;
  std::string prop_id;
  Stance stance = Stance::Accept;
};

inline json stance_to_json(const StanceLabel& s) {
  json j;
  j["participant"] = s.participant;
  j["prop_id"] = s.prop_id;
  j["stance"] = std::string(stance_name(s.stance));
  j["t"] = s.timestamp;
  return j;
}

inline std::vector<StanceLabel> parse_stances(
    const std::string& path, const std::set<std::string>& known_prop_ids) {
  auto file = read_jsonl(path);
  std::vector<StanceLabel> out;
  for (size_t i = 0; i < file.records.size(); ++i) {
    const json& j = file.records[i];
    const std::string where = path + ":" + std::to_string(file.line_numbers[i]);
    for (const char* key : {"t", "participant", "prop_id", "stance"})
      if (!j.contains(key))
        throw Error(Errc::SchemaError, where + ": missing field " + key);

    StanceLabel s;
    s.id = "s" + std::to_string(out.size());
    s.timestamp = j["t"].get<double>();
    auto who = normalize_participant(j["participant"].get<std::string>());
    if (!who)
      throw Error(Errc::UnknownParticipant,
                  where + ": " + j["participant"].get<std::string>());
    s.participant = *who;
    s.prop_id = j["prop_id"].get<std::string>();
    if (!known_prop_ids.count(s.prop_id))
      throw Error(Errc::DanglingPropositionRef, where + ": " + s.prop_id);
    auto stance = parse_stance(j["stance"].get<std::string>());
    if (!stance)
      throw Error(Errc::UnknownStance,
                  where + ": " + j["stance"].get<std::string>());
    s.stance = *stance;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace cgtrack
