#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cgtrack/goalgen.hpp"
#include "cgtrack/metrics.hpp"
#include "support/oracles.hpp"

using namespace cgtrack;

namespace {

using StrSet = std::set<std::string>;

SideView view_of(Side side,
                 std::vector<std::tuple<int, int, std::string>> cells) {
  SideView v;
  v.side = side;
  for (auto& [col, layer, token] : cells)
    v.grid[static_cast<size_t>(col)][static_cast<size_t>(layer)] = token;
  return v;
}

StructureState one_block_state(const std::string& id_text, int x, int y,
                               int z) {
  StructureState s;
  const auto id = parse_block_id(id_text);
  REQUIRE(id.has_value());
  s.placements[id_text] = Placement{*id, Cell{x, y, z}, Orientation::AlongX};
  return s;
}

}  // namespace

TEST_CASE("dice similarity") {
  CHECK(dice(StrSet{"p", "q", "r"}, StrSet{"q", "r", "s"}) ==
        Catch::Approx(2.0 / 3.0).margin(1e-12));
  CHECK(dice(StrSet{"p"}, StrSet{"p"}) == 1.0);
  CHECK(dice(StrSet{"p"}, StrSet{"q"}) == 0.0);
  CHECK(dice(StrSet{}, StrSet{}) == 1.0);
  CHECK(dice(StrSet{}, StrSet{"x"}) == 0.0);

  SECTION("symmetric, bounded, and discriminating on random sets") {
    std::mt19937 rng(20260817u);
    for (int trial = 0; trial < 500; ++trial) {
      StrSet a, b;
      for (unsigned i = 0; i < 8; ++i) {
        if (rng() % 2u) a.insert("item" + std::to_string(rng() % 10u));
        if (rng() % 2u) b.insert("item" + std::to_string(rng() % 10u));
      }
      const double d = dice(a, b);
      CHECK(d == dice(b, a));
      CHECK(d >= 0.0);
      CHECK(d <= 1.0);
      if (!a.empty() || !b.empty()) {
        if (a == b) CHECK(d == 1.0);
        else CHECK(d < 1.0);
      }
    }
  }
}

TEST_CASE("average turn DSC") {
  // per-turn dice values 2/3, 1, 0 -> mean 5/9
  const std::vector<StrSet> pred = {{"p"}, {"x"}, {"y"}};
  const std::vector<StrSet> truth = {{"p", "q"}, {"x"}, {"z"}};
  CHECK(average_turn_dsc(pred, truth) == Catch::Approx(5.0 / 9.0).margin(1e-12));

  CHECK(average_turn_dsc(truth, truth) == 1.0);

  SECTION("turn count mismatch is an error") {
    try {
      average_turn_dsc(pred, std::vector<StrSet>{{"p"}});
      FAIL("expected TurnCountMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::TurnCountMismatch);
    }
  }
}

TEST_CASE("global DSC is dice of the final states") {
  CHECK(global_dsc(StrSet{"a", "b"}, StrSet{"a", "b"}) == 1.0);
  CHECK(global_dsc(StrSet{"a"}, StrSet{"b"}) == 0.0);
  CHECK(global_dsc(StrSet{}, StrSet{}) == 1.0);
}

TEST_CASE("cohen kappa") {
  using Labels = std::vector<std::string>;

  SECTION("perfect agreement with two classes present") {
    const Labels a = {"x", "y", "x", "y"};
    CHECK(cohen_kappa(a, a) == 1.0);
  }

  SECTION("agreement at chance level") {
    const Labels a = {"x", "x", "y", "y"};
    const Labels b = {"x", "y", "x", "y"};
    CHECK(cohen_kappa(a, b) == Catch::Approx(0.0).margin(1e-12));
  }

  SECTION("hand-computed three-class value") {
    // p_o = 4/5; marginals a: 2/5, 2/5, 1/5 and b: 1/5, 3/5, 1/5
    // p_e = 0.36, kappa = 0.44 / 0.64 = 0.6875
    const Labels a = {"x", "x", "y", "y", "z"};
    const Labels b = {"x", "y", "y", "y", "z"};
    CHECK(cohen_kappa(a, b) == Catch::Approx(0.6875).margin(1e-12));
  }

  SECTION("saturated chance agreement is flagged") {
    std::vector<Warning> warnings;
    const Labels a = {"x", "x", "x"};
    CHECK(cohen_kappa(a, a, &warnings) == 1.0);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].kind == warn::kDegenerateMarginals);
  }

  SECTION("length mismatch is an error") {
    try {
      cohen_kappa(Labels{"x"}, Labels{"x", "y"});
      FAIL("expected LengthMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::LengthMismatch);
    }
  }

  SECTION("invariant under relabeling") {
    std::mt19937 rng(777u);
    const std::map<std::string, std::string> relabel = {
        {"a", "q"}, {"b", "r"}, {"c", "p"}};
    for (int trial = 0; trial < 100; ++trial) {
      Labels a, b;
      const size_t n = 4 + rng() % 20u;
      for (size_t i = 0; i < n; ++i) {
        a.push_back(std::string(1, static_cast<char>('a' + rng() % 3u)));
        b.push_back(std::string(1, static_cast<char>('a' + rng() % 3u)));
      }
      Labels a2, b2;
      for (const auto& l : a) a2.push_back(relabel.at(l));
      for (const auto& l : b) b2.push_back(relabel.at(l));
      CHECK(cohen_kappa(a, b) ==
            Catch::Approx(cohen_kappa(a2, b2)).margin(1e-12));
    }
  }
}

TEST_CASE("structure agreement over occupancy labels") {
  SECTION("labels enumerate cells in fixed order") {
    const auto labels = occupancy_labels(one_block_state("rs1", 1, 0, 0));
    REQUIRE(labels.size() == 27);
    CHECK(labels[1] == "red");  // (z=0, y=0, x=1)
    CHECK(labels[0] == "");
  }

  SECTION("identical reconstructions score 1") {
    const auto s = one_block_state("rs1", 1, 0, 0);
    CHECK(structure_iaa(s, s) == 1.0);
  }

  SECTION("one block against an empty board scores 0") {
    // p_o = 26/27 equals p_e, so kappa collapses to zero
    const auto s = one_block_state("rs1", 1, 0, 0);
    CHECK(structure_iaa(s, StructureState{}) ==
          Catch::Approx(0.0).margin(1e-12));
  }
}

TEST_CASE("view grids translate to relation atoms") {
  SECTION("single filled cell") {
    const auto atoms =
        view_grid_to_relations({view_of(Side::Front, {{0, 0, "green"}})});
    REQUIRE(atoms.size() == 1);
    CHECK(atoms.begin()->to_string() == "on(green,base)");
  }

  SECTION("two cells side by side") {
    const auto atoms = view_grid_to_relations(
        {view_of(Side::Front, {{0, 0, "green"}, {1, 0, "red"}})});
    std::set<std::string> got;
    for (const auto& a : atoms) got.insert(a.to_string());
    CHECK(got == std::set<std::string>{"on(green,base)", "on(red,base)",
                                       "leftof(green,red,front)",
                                       "nextto(green,red)"});
  }

  SECTION("non-adjacent columns relate by leftof only") {
    const auto atoms = view_grid_to_relations(
        {view_of(Side::Left, {{0, 1, "blue"}, {2, 1, "red"}})});
    std::set<std::string> got;
    for (const auto& a : atoms) got.insert(a.to_string());
    CHECK(got == std::set<std::string>{"leftof(blue,red,left)"});
  }

  SECTION("vertical adjacency emits on") {
    const auto atoms = view_grid_to_relations(
        {view_of(Side::Front, {{1, 0, "red"}, {1, 1, "yellow"}})});
    std::set<std::string> got;
    for (const auto& a : atoms) got.insert(a.to_string());
    CHECK(got == std::set<std::string>{"on(red,base)", "on(yellow,red)"});
  }

  SECTION("single-color full view collapses under deduplication") {
    std::vector<std::tuple<int, int, std::string>> cells;
    for (int col = 0; col < 3; ++col)
      for (int layer = 0; layer < 3; ++layer)
        cells.emplace_back(col, layer, "green");
    const auto atoms = view_grid_to_relations({view_of(Side::Front, cells)});
    std::set<std::string> got;
    for (const auto& a : atoms) got.insert(a.to_string());
    CHECK(got == std::set<std::string>{"on(green,base)", "on(green,green)",
                                       "leftof(green,green,front)",
                                       "nextto(green,green)"});
  }

  SECTION("several views union and deduplicate") {
    const auto v = view_of(Side::Front, {{0, 0, "green"}, {1, 0, "red"}});
    CHECK(view_grid_to_relations({v, v}) == view_grid_to_relations({v}));
    const auto w = view_of(Side::Left, {{0, 0, "green"}});
    const auto both = view_grid_to_relations({v, w});
    CHECK(both.size() == view_grid_to_relations({v}).size() + 0);
    // left view adds only on(green,base), already present from the front
  }

  SECTION("unknown color token is rejected") {
    try {
      view_grid_to_relations({view_of(Side::Front, {{0, 0, "teal"}})});
      FAIL("expected UnknownColorToken");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::UnknownColorToken);
      CHECK(std::string(e.what()).find("teal") != std::string::npos);
    }
  }

  SECTION("custom palettes are honored") {
    const auto atoms = view_grid_to_relations(
        {view_of(Side::Front, {{0, 0, "purple"}})}, {"purple", "orange"});
    CHECK(atoms.size() == 1);
  }
}

TEST_CASE("grid translation is sound against the cell-level enumerator") {
  // On full-volume structures every projected token comes from a front-most
  // cell, so each grid-derived atom must also hold cell-for-cell in 3D.
  for (unsigned seed = 1; seed <= 200; ++seed) {
    const auto goal = generate_goal(seed);
    for (Side side : kAllSides) {
      const auto grid_atoms =
          view_grid_to_relations({project_side_view(goal, side)});
      const auto cell_atoms = oracle::cell_color_relations(goal, side);
      for (const auto& atom : grid_atoms) {
        INFO("seed " << seed << " side " << side_name(side) << " atom "
                     << atom.to_string());
        REQUIRE(cell_atoms.count(atom) == 1);
      }
    }
  }
}
