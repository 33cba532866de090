#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cgtrack/common.hpp"

namespace cgtrack {

// ---------------------------------------------------------------------------
// Board geometry.
//
// The board is a 3x3x3 cell volume. Axis conventions, fixed for the whole
// project:
//   x: width, increasing rightward in the front view
//   y: depth, increasing away from the front viewer
//   z: layer, 0 = base
// Viewers:
//   front faces +y (view column c = x,     nearest cell = min y)
//   left  faces +x (view column c = 2 - y, nearest cell = min x)
//   right faces -x (view column c = y,     nearest cell = max x)
// ---------------------------------------------------------------------------

inline constexpr int kBoardSize = 3;

struct Cell {
  int x = 0;
  int y = 0;
  int z = 0;

  auto operator<=>(const Cell&) const = default;

  bool in_bounds() const {
    return x >= 0 && x < kBoardSize && y >= 0 && y < kBoardSize && z >= 0 &&
           z < kBoardSize;
  }

  std::string to_string() const {
    return "(" + std::to_string(x) + "," + std::to_string(y) + "," +
           std::to_string(z) + ")";
  }
};

enum class Shape { Short, Long };

inline char shape_initial(Shape s) { return s == Shape::Short ? 's' : 'l'; }

inline const std::vector<std::string> kDefaultPalette = {"red", "green", "blue",
                                                         "yellow"};

// Color names in a palette must have pairwise distinct initials; the textual
// block id encodes only the initial.
inline bool palette_valid(const std::vector<std::string>& palette) {
  if (palette.empty()) return false;
  std::set<char> initials;
  for (const auto& c : palette) {
    if (c.empty()) return false;
    if (!initials.insert(c[0]).second) return false;
  }
  return true;
}

struct BlockId {
  std::string color;  // full color name, lowercase ("red")
  Shape shape = Shape::Short;
  int index = 1;  // unique within (color, shape), starts at 1

  auto operator<=>(const BlockId&) const = default;

  std::string text() const {
    return std::string(1, color.empty() ? '?' : color[0]) +
           shape_initial(shape) + std::to_string(index);
  }
};

// Parses "rs1" / "yl2" style ids against a palette. Round-trips losslessly:
// parse_block_id(b.text()).text() == b.text().
inline std::optional<BlockId> parse_block_id(
    std::string_view text,
    const std::vector<std::string>& palette = kDefaultPalette) {
  if (text.size() < 3) return std::nullopt;
  char color_initial = text[0];
  char shape_char = text[1];
  if (shape_char != 's' && shape_char != 'l') return std::nullopt;
  std::string color;
  for (const auto& c : palette) {
    if (!c.empty() && c[0] == color_initial) {
      color = c;
      break;
    }
  }
  if (color.empty()) return std::nullopt;
  int index = 0;
  for (size_t i = 2; i < text.size(); ++i) {
    if (text[i] < '0' || text[i] > '9') return std::nullopt;
    index = index * 10 + (text[i] - '0');
  }
  if (index < 1) return std::nullopt;
  return BlockId{color, shape_char == 's' ? Shape::Short : Shape::Long, index};
}

inline bool is_block_id_text(std::string_view text,
                             const std::vector<std::string>& palette =
                                 kDefaultPalette) {
  return parse_block_id(text, palette).has_value();
}

enum class Orientation { AlongX, AlongY };

struct Placement {
  BlockId block;
  Cell anchor;
  Orientation orientation = Orientation::AlongX;  // meaningful for Long only

  auto operator<=>(const Placement&) const = default;

  // A short block occupies its anchor; a long block also occupies the
  // adjacent cell in the orientation direction. All cells share one layer.
  std::vector<Cell> cells() const {
    std::vector<Cell> out{anchor};
    if (block.shape == Shape::Long) {
      Cell second = anchor;
      if (orientation == Orientation::AlongX)
        second.x += 1;
      else
        second.y += 1;
      out.push_back(second);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Sides and participant aliasing.
// ---------------------------------------------------------------------------

enum class Side { Front, Left, Right };

inline std::string_view side_name(Side s) {
  switch (s) {
    case Side::Front: return "front";
    case Side::Left: return "left";
    case Side::Right: return "right";
  }
  return "front";
}

inline std::optional<Side> parse_side(std::string_view s) {
  std::string l = ascii_lower(s);
  if (l == "front") return Side::Front;
  if (l == "left") return Side::Left;
  if (l == "right") return Side::Right;
  return std::nullopt;
}

inline const std::array<Side, 3> kAllSides = {Side::Front, Side::Left,
                                              Side::Right};

// Which director holds which side view. Must stay a bijection.
struct SideAssignment {
  Side d1 = Side::Front;
  Side d2 = Side::Left;
  Side d3 = Side::Right;

  bool valid() const { return d1 != d2 && d1 != d3 && d2 != d3; }

  std::optional<Side> side_of(std::string_view participant) const {
    if (participant == "D1") return d1;
    if (participant == "D2") return d2;
    if (participant == "D3") return d3;
    return std::nullopt;  // the builder holds no side view
  }

  std::string director_of(Side s) const {
    if (s == d1) return "D1";
    if (s == d2) return "D2";
    return "D3";
  }
};

// ---------------------------------------------------------------------------
// Relation atoms.
// ---------------------------------------------------------------------------

enum class Rel { On, Below, LeftOf, RightOf, NextTo, Behind, InFrontOf };

inline std::string_view rel_name(Rel r) {
  switch (r) {
    case Rel::On: return "on";
    case Rel::Below: return "below";
    case Rel::LeftOf: return "leftof";
    case Rel::RightOf: return "rightof";
    case Rel::NextTo: return "nextto";
    case Rel::Behind: return "behind";
    case Rel::InFrontOf: return "infrontof";
  }
  return "on";
}

inline std::optional<Rel> parse_rel(std::string_view s) {
  std::string l;
  for (char c : ascii_lower(s))
    if (c != '_' && c != ' ' && c != '-') l += c;
  if (l == "on" || l == "ontopof") return Rel::On;
  if (l == "below" || l == "under") return Rel::Below;
  if (l == "leftof") return Rel::LeftOf;
  if (l == "rightof") return Rel::RightOf;
  if (l == "nextto" || l == "besides" || l == "beside") return Rel::NextTo;
  if (l == "behind") return Rel::Behind;
  if (l == "infrontof") return Rel::InFrontOf;
  return std::nullopt;
}

inline bool rel_is_side_dependent(Rel r) {
  return r == Rel::LeftOf || r == Rel::RightOf || r == Rel::Behind ||
         r == Rel::InFrontOf;
}

inline constexpr std::string_view kBaseArg = "base";

// A spatial relation between two argument tokens. Arguments are block id
// text ("rs1"), "base", an ungrounded descriptor ("BlueShort"), or a bare
// color token ("red") when the atom comes from an identity-free view grid.
//
// Canonical form: below/rightof/infrontof are stored as their mirrored
// counterparts, nextto arguments are sorted, and side is dropped from the
// side-invariant relations (on, nextto).
struct RelationAtom {
  Rel rel = Rel::On;
  std::string arg1;
  std::string arg2;
  std::optional<Side> side;
  std::optional<int> layer;

  auto operator<=>(const RelationAtom&) const = default;

  RelationAtom canonical() const {
    RelationAtom a = *this;
    switch (a.rel) {
      case Rel::Below:
        a.rel = Rel::On;
        std::swap(a.arg1, a.arg2);
        break;
      case Rel::RightOf:
        a.rel = Rel::LeftOf;
        std::swap(a.arg1, a.arg2);
        break;
      case Rel::InFrontOf:
        a.rel = Rel::Behind;
        std::swap(a.arg1, a.arg2);
        break;
      default:
        break;
    }
    if (a.rel == Rel::NextTo && a.arg2 < a.arg1) std::swap(a.arg1, a.arg2);
    if (!rel_is_side_dependent(a.rel)) a.side.reset();
    return a;
  }

  bool is_canonical() const { return *this == canonical(); }

  RelationAtom without_layer() const {
    RelationAtom a = *this;
    a.layer.reset();
    return a;
  }

  std::string to_string() const {
    std::string s(rel_name(rel));
    s += "(" + arg1 + "," + arg2;
    if (side) s += "," + std::string(side_name(*side));
    if (layer) s += ",layer=" + std::to_string(*layer);
    s += ")";
    return s;
  }

  // Human-facing rendering; layers display 1-indexed.
  std::string to_display_string() const {
    std::string s(rel_name(rel));
    s += "(" + arg1 + ", " + arg2;
    if (side) s += ", " + std::string(side_name(*side)) + " side";
    if (layer) s += ", layer " + std::to_string(*layer + 1);
    s += ")";
    return s;
  }
};

inline RelationAtom make_atom(Rel rel, std::string arg1, std::string arg2,
                              std::optional<Side> side = std::nullopt,
                              std::optional<int> layer = std::nullopt) {
  return RelationAtom{rel, std::move(arg1), std::move(arg2), side, layer}
      .canonical();
}

// ---------------------------------------------------------------------------
// Structure state.
// ---------------------------------------------------------------------------

struct StructureState {
  // Keyed by block id text so iteration order is deterministic.
  std::map<std::string, Placement> placements;
  std::optional<double> timestamp;

  bool operator==(const StructureState& other) const {
    return placements == other.placements;
  }

  bool contains(const std::string& block_text) const {
    return placements.count(block_text) > 0;
  }

  std::map<Cell, std::string> occupancy() const {
    std::map<Cell, std::string> occ;
    for (const auto& [id, p] : placements)
      for (const Cell& c : p.cells()) occ[c] = id;
    return occ;
  }

  // Checks bounds, cell uniqueness, and the support rule (every cell at
  // z>0 must sit directly above an occupied cell). Violations are reported,
  // never fixed.
  std::vector<Warning> validate() const {
    std::vector<Warning> out;
    std::map<Cell, std::string> occ;
    for (const auto& [id, p] : placements) {
      for (const Cell& c : p.cells()) {
        if (!c.in_bounds()) {
          out.push_back({std::string(warn::kOutOfBounds),
                         "cell " + c.to_string() + " of block " + id, ""});
          continue;
        }
        auto [it, inserted] = occ.emplace(c, id);
        if (!inserted)
          out.push_back({std::string(warn::kOccupancyConflict),
                         "cell " + c.to_string() + " claimed by " + it->second +
                             " and " + id,
                         ""});
      }
    }
    for (const auto& [id, p] : placements) {
      if (p.anchor.z == 0) continue;
      bool supported = false;
      for (const Cell& c : p.cells()) {
        Cell below{c.x, c.y, c.z - 1};
        if (occ.count(below)) supported = true;
      }
      if (!supported)
        out.push_back({std::string(warn::kUnsupportedPlacement),
                       "block " + id + " at " + p.anchor.to_string() +
                           " has no support below",
                       ""});
    }
    return out;
  }

  bool is_valid() const { return validate().empty(); }
};

// ---------------------------------------------------------------------------
// Actions.
// ---------------------------------------------------------------------------

enum class ActionKind { Put, Remove, Move };

inline std::string_view action_kind_name(ActionKind k) {
  switch (k) {
    case ActionKind::Put: return "put";
    case ActionKind::Remove: return "remove";
    case ActionKind::Move: return "move";
  }
  return "put";
}

// A discrete board manipulation. put carries target only, remove carries
// origin only, move carries both.
struct ActionEvent {
  double timestamp = 0.0;
  ActionKind kind = ActionKind::Put;
  BlockId block;
  std::optional<Placement> target;
  std::optional<Placement> origin;
  std::optional<Side> side;
  std::set<RelationAtom> relation_summary;

  bool operator==(const ActionEvent& other) const {
    return timestamp == other.timestamp && kind == other.kind &&
           block == other.block && target == other.target &&
           origin == other.origin && side == other.side &&
           relation_summary == other.relation_summary;
  }
};

namespace detail {

inline void check_cells_free_and_supported(
    const std::map<Cell, std::string>& occ, const Placement& p) {
  for (const Cell& c : p.cells()) {
    if (!c.in_bounds())
      throw Error(Errc::OutOfBounds,
                  "cell " + c.to_string() + " for block " + p.block.text());
    auto it = occ.find(c);
    if (it != occ.end())
      throw Error(Errc::OccupiedCell, "cell " + c.to_string() +
                                          " already holds " + it->second);
  }
  if (p.anchor.z > 0) {
    bool supported = false;
    for (const Cell& c : p.cells())
      if (occ.count(Cell{c.x, c.y, c.z - 1})) supported = true;
    if (!supported)
      throw Error(Errc::UnsupportedPlacement,
                  "block " + p.block.text() + " at " + p.anchor.to_string() +
                      " would float");
  }
}

inline void check_result_valid(const StructureState& state) {
  auto warnings = state.validate();
  if (warnings.empty()) return;
  const Warning& w = warnings.front();
  Errc code = Errc::UnsupportedPlacement;
  if (w.kind == warn::kOccupancyConflict) code = Errc::OccupiedCell;
  if (w.kind == warn::kOutOfBounds) code = Errc::OutOfBounds;
  throw Error(code, w.message);
}

}  // namespace detail

// Applies one action, returning the new state; the input is untouched.
inline StructureState apply_action(const StructureState& state,
                                   const ActionEvent& action) {
  StructureState next = state;
  next.timestamp = action.timestamp;
  const std::string id = action.block.text();
  switch (action.kind) {
    case ActionKind::Put: {
      if (!action.target)
        throw Error(Errc::SchemaError, "put without target for " + id);
      if (action.target->block != action.block)
        throw Error(Errc::SchemaError, "target names a different block than " + id);
      if (next.contains(id))
        throw Error(Errc::DuplicateBlockId, "block " + id + " already placed");
      detail::check_cells_free_and_supported(next.occupancy(), *action.target);
      next.placements[id] = *action.target;
      break;
    }
    case ActionKind::Remove: {
      if (!next.contains(id))
        throw Error(Errc::UnknownBlock, "block " + id + " not on the board");
      next.placements.erase(id);
      break;
    }
    case ActionKind::Move: {
      if (!next.contains(id))
        throw Error(Errc::UnknownBlock, "block " + id + " not on the board");
      if (!action.target)
        throw Error(Errc::SchemaError, "move without target for " + id);
      if (action.target->block != action.block)
        throw Error(Errc::SchemaError, "target names a different block than " + id);
      next.placements.erase(id);
      detail::check_cells_free_and_supported(next.occupancy(), *action.target);
      next.placements[id] = *action.target;
      break;
    }
  }
  detail::check_result_valid(next);
  return next;
}

// ---------------------------------------------------------------------------
// View coordinates.
// ---------------------------------------------------------------------------

// View column of a cell for a given side (0 = viewer's left).
inline int view_column(Side side, const Cell& c) {
  switch (side) {
    case Side::Front: return c.x;
    case Side::Left: return kBoardSize - 1 - c.y;
    case Side::Right: return c.y;
  }
  return c.x;
}

// Viewer depth of a cell (0 = nearest to the viewer).
inline int view_depth(Side side, const Cell& c) {
  switch (side) {
    case Side::Front: return c.y;
    case Side::Left: return c.x;
    case Side::Right: return kBoardSize - 1 - c.x;
  }
  return c.y;
}

// ---------------------------------------------------------------------------
// Relation derivation.
// ---------------------------------------------------------------------------

// Canonical relation atoms of a state as seen from `side`:
//   on(a,b)          some cell of a directly above a cell of b
//   on(a,base)       a touches the base layer
//   nextto(a,b)      shared layer, horizontally adjacent cells
//   leftof(a,b,side) shared layer, min view-column of a < min view-column of b
//   behind(a,b,side) shared layer, min view-depth of a > min view-depth of b
// Every placement is flat, so "shared layer" is anchor.z equality.
inline std::set<RelationAtom> derive_relations(const StructureState& state,
                                               Side side) {
  std::set<RelationAtom> out;
  const auto& ps = state.placements;
  for (const auto& [id_a, a] : ps) {
    if (a.anchor.z == 0) out.insert(make_atom(Rel::On, id_a, std::string(kBaseArg)));
    for (const auto& [id_b, b] : ps) {
      if (id_a == id_b) continue;
      bool on = false, adjacent = false;
      for (const Cell& ca : a.cells()) {
        for (const Cell& cb : b.cells()) {
          if (ca.x == cb.x && ca.y == cb.y && ca.z == cb.z + 1) on = true;
          if (ca.z == cb.z &&
              std::abs(ca.x - cb.x) + std::abs(ca.y - cb.y) == 1)
            adjacent = true;
        }
      }
      if (on) out.insert(make_atom(Rel::On, id_a, id_b));
      if (adjacent) out.insert(make_atom(Rel::NextTo, id_a, id_b));
      if (a.anchor.z == b.anchor.z) {
        int min_col_a = kBoardSize, min_col_b = kBoardSize;
        int min_dep_a = kBoardSize, min_dep_b = kBoardSize;
        for (const Cell& c : a.cells()) {
          min_col_a = std::min(min_col_a, view_column(side, c));
          min_dep_a = std::min(min_dep_a, view_depth(side, c));
        }
        for (const Cell& c : b.cells()) {
          min_col_b = std::min(min_col_b, view_column(side, c));
          min_dep_b = std::min(min_dep_b, view_depth(side, c));
        }
        if (min_col_a < min_col_b)
          out.insert(make_atom(Rel::LeftOf, id_a, id_b, side));
        if (min_dep_a > min_dep_b)
          out.insert(make_atom(Rel::Behind, id_a, id_b, side));
      }
    }
  }
  return out;
}

// Union of the three viewpoints; side-invariant atoms appear once.
inline std::set<RelationAtom> derive_relations_all_sides(
    const StructureState& state) {
  std::set<RelationAtom> out;
  for (Side s : kAllSides) {
    auto atoms = derive_relations(state, s);
    out.insert(atoms.begin(), atoms.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Side views.
// ---------------------------------------------------------------------------

// 3x3 projection of the structure from one side. grid[col][layer] holds the
// color token of the nearest occupying block, or "" for empty.
struct SideView {
  Side side = Side::Front;
  std::array<std::array<std::string, kBoardSize>, kBoardSize> grid;

  bool operator==(const SideView&) const = default;

  const std::string& at(int col, int layer) const {
    return grid[static_cast<size_t>(col)][static_cast<size_t>(layer)];
  }

  int filled_cells() const {
    int n = 0;
    for (const auto& col : grid)
      for (const auto& cell : col)
        if (!cell.empty()) ++n;
    return n;
  }

  // Fixed-width text grid: one color initial per cell ('.' = empty), top
  // layer first.
  std::string to_text() const {
    std::string out;
    for (int layer = kBoardSize - 1; layer >= 0; --layer) {
      for (int col = 0; col < kBoardSize; ++col) {
        if (col) out += ' ';
        const std::string& token = at(col, layer);
        out += token.empty() ? '.' : token[0];
      }
      out += '\n';
    }
    return out;
  }
};

inline SideView project_side_view(const StructureState& state, Side side) {
  SideView view;
  view.side = side;
  std::array<std::array<int, kBoardSize>, kBoardSize> best_depth;
  for (auto& col : best_depth) col.fill(kBoardSize);
  for (const auto& [id, p] : state.placements) {
    for (const Cell& c : p.cells()) {
      int col = view_column(side, c);
      int depth = view_depth(side, c);
      auto ucol = static_cast<size_t>(col);
      auto uz = static_cast<size_t>(c.z);
      if (depth < best_depth[ucol][uz]) {
        best_depth[ucol][uz] = depth;
        view.grid[ucol][uz] = p.block.color;
      }
    }
  }
  return view;
}

// ---------------------------------------------------------------------------
// Contiguity.
// ---------------------------------------------------------------------------

// True iff the occupied cells form one 6-connected component. The empty
// board counts as contiguous so replay from t=0 needs no special case.
inline bool check_contiguity(const StructureState& state) {
  auto occ = state.occupancy();
  if (occ.empty()) return true;
  std::set<Cell> seen;
  std::vector<Cell> stack{occ.begin()->first};
  seen.insert(occ.begin()->first);
  while (!stack.empty()) {
    Cell c = stack.back();
    stack.pop_back();
    const std::array<Cell, 6> neighbors = {
        Cell{c.x + 1, c.y, c.z}, Cell{c.x - 1, c.y, c.z},
        Cell{c.x, c.y + 1, c.z}, Cell{c.x, c.y - 1, c.z},
        Cell{c.x, c.y, c.z + 1}, Cell{c.x, c.y, c.z - 1}};
    for (const Cell& n : neighbors) {
      if (occ.count(n) && !seen.count(n)) {
        seen.insert(n);
        stack.push_back(n);
      }
    }
  }
  return seen.size() == occ.size();
}

// Relation atoms an action makes true: everything in the resulting state
// that mentions the block and was not already true before. A remove
// produces nothing. With no annotated side, side-dependent atoms from all
// three viewpoints are included (the board is visible to everyone).
inline std::set<RelationAtom> summarize_action(const StructureState& before,
                                               const StructureState& after,
                                               const ActionEvent& action) {
  if (action.kind == ActionKind::Remove) return {};
  const std::string id = action.block.text();
  auto mentions = [&id](const RelationAtom& a) {
    return a.arg1 == id || a.arg2 == id;
  };
  std::set<RelationAtom> before_atoms, after_atoms;
  if (action.side) {
    before_atoms = derive_relations(before, *action.side);
    after_atoms = derive_relations(after, *action.side);
  } else {
    before_atoms = derive_relations_all_sides(before);
    after_atoms = derive_relations_all_sides(after);
  }
  std::set<RelationAtom> out;
  for (const RelationAtom& a : after_atoms)
    if (mentions(a) && !before_atoms.count(a)) out.insert(a);
  return out;
}

}  // namespace cgtrack
