#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "cgtrack/blockworld.hpp"
#include "cgtrack/common.hpp"
#include "cgtrack/serialize.hpp"

namespace cgtrack {

// Seeded goal structure: tiles each of the three layers completely with
// short and long blocks, so the occupied cells are exactly the full 3x3x3
// volume. The draw sequence below is frozen; golden tests pin its output.
//
// Per layer, cells are scanned in (y, x) order. At each free cell the engine
// draws, in this order:
//   1. one bit for long-vs-short, only when a long piece fits
//   2. one bit for orientation, only when it fits both ways
//   3. a color index (engine() % palette size)
// Raw engine() values with modulo reduction keep the stream identical across
// standard library implementations.
inline StructureState generate_goal(
    uint32_t seed, const std::vector<std::string>& palette = kDefaultPalette) {
  if (!palette_valid(palette))
    throw Error(Errc::UsageError,
                "palette must be non-empty with distinct initials");
  std::mt19937 engine(seed);
  StructureState goal;
  std::map<std::pair<std::string, Shape>, int> counters;

  for (int z = 0; z < kBoardSize; ++z) {
    std::array<std::array<bool, kBoardSize>, kBoardSize> filled{};
    auto free_cell = [&filled](int x, int y) {
      return x < kBoardSize && y < kBoardSize &&
             !filled[static_cast<size_t>(x)][static_cast<size_t>(y)];
    };
    for (int y = 0; y < kBoardSize; ++y) {
      for (int x = 0; x < kBoardSize; ++x) {
        if (!free_cell(x, y)) continue;
        bool can_x = free_cell(x + 1, y);
        bool can_y = free_cell(x, y + 1);
        bool make_long = false;
        Orientation orient = Orientation::AlongX;
        if (can_x || can_y) {
          make_long = (engine() % 2u) == 0u;
          if (make_long) {
            if (can_x && can_y)
              orient = (engine() % 2u) == 0u ? Orientation::AlongX
                                             : Orientation::AlongY;
            else
              orient = can_x ? Orientation::AlongX : Orientation::AlongY;
          }
        }
        const std::string& color =
            palette[engine() % static_cast<uint32_t>(palette.size())];

        BlockId id;
        id.color = color;
        id.shape = make_long ? Shape::Long : Shape::Short;
        id.index = ++counters[{color, id.shape}];
        Placement p{id, Cell{x, y, z}, orient};
        for (const Cell& c : p.cells())
          filled[static_cast<size_t>(c.x)][static_cast<size_t>(c.y)] = true;
        goal.placements.emplace(id.text(), p);
      }
    }
  }
  return goal;
}

struct RenderedViews {
  SideView front;
  SideView left;
  SideView right;

  const SideView& at(Side s) const {
    switch (s) {
      case Side::Front: return front;
      case Side::Left: return left;
      case Side::Right: return right;
    }
    return front;
  }
};

inline RenderedViews render_views(const StructureState& goal) {
  return RenderedViews{project_side_view(goal, Side::Front),
                       project_side_view(goal, Side::Left),
                       project_side_view(goal, Side::Right)};
}

inline json goal_to_json(const StructureState& goal, uint32_t seed) {
  json j = state_to_json(goal);
  j["schema_version"] = kSchemaVersion;
  j["seed"] = seed;
  j["views"] = json::array();
  auto views = render_views(goal);
  for (Side s : kAllSides) j["views"].push_back(view_to_json(views.at(s)));
  return j;
}

// Writes goal.json plus one text grid per side into `dir`.
inline void write_goal_package(const std::filesystem::path& dir,
                               const StructureState& goal, uint32_t seed) {
  std::filesystem::create_directories(dir);
  write_json_file((dir / "goal.json").string(), goal_to_json(goal, seed));
  auto views = render_views(goal);
  for (Side s : kAllSides) {
    std::string name = "view_" + std::string(side_name(s)) + ".txt";
    std::ofstream out(dir / name, std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + (dir / name).string());
    out << views.at(s).to_text();
  }
}

}  // namespace cgtrack
