#pragma once

// Set-overlap and agreement metrics, plus the translation from projected
// view grids to identity-free relation atoms.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cgtrack/blockworld.hpp"
#include "cgtrack/common.hpp"

namespace cgtrack {

// Dice similarity 2|a∩b| / (|a| + |b|). Two empty sets score 1.0: an empty
// predicted ground against an empty actual ground is perfect agreement, not
// a degenerate case.
template <typename T>
double dice(const std::set<T>& a, const std::set<T>& b) {
  if (a.empty() && b.empty()) return 1.0;
  size_t inter = 0;
  for (const auto& x : a) inter += b.count(x);
  return 2.0 * static_cast<double>(inter) /
         static_cast<double>(a.size() + b.size());
}

// Mean of per-turn dice values over paired cumulative turn states.
template <typename T>
double average_turn_dsc(const std::vector<std::set<T>>& pred,
                        const std::vector<std::set<T>>& truth) {
  if (pred.size() != truth.size())
    throw Error(Errc::TurnCountMismatch,
                "predicted " + std::to_string(pred.size()) +
                    " turns, actual " + std::to_string(truth.size()));
  if (pred.empty()) return 1.0;  // nothing to disagree on
  double sum = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) sum += dice(pred[i], truth[i]);
  return sum / static_cast<double>(pred.size());
}

// Dice of the final cumulative states.
template <typename T>
double global_dsc(const std::set<T>& pred_final,
                  const std::set<T>& truth_final) {
  return dice(pred_final, truth_final);
}

// Cohen's kappa over paired label sequences: (p_o − p_e) / (1 − p_e).
// When chance agreement saturates (both raters constant on one label) the
// coefficient is undefined; by convention this returns 1.0 for perfect
// observed agreement and 0.0 otherwise, flagged with a warning.
template <typename T>
double cohen_kappa(const std::vector<T>& a, const std::vector<T>& b,
                   std::vector<Warning>* warnings = nullptr) {
  if (a.size() != b.size())
    throw Error(Errc::LengthMismatch,
                "label sequences of length " + std::to_string(a.size()) +
                    " and " + std::to_string(b.size()));
  if (a.empty()) {
    if (warnings)
      warnings->push_back({std::string(warn::kDegenerateMarginals),
                           "empty label sequences", ""});
    return 1.0;
  }

  const double n = static_cast<double>(a.size());
  std::map<T, double> count_a, count_b;
  double agree = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    count_a[a[i]] += 1.0;
    count_b[b[i]] += 1.0;
    if (a[i] == b[i]) agree += 1.0;
  }
  const double p_o = agree / n;
  double p_e = 0.0;
  for (const auto& [label, ca] : count_a) {
    const auto it = count_b.find(label);
    if (it != count_b.end()) p_e += (ca / n) * (it->second / n);
  }

  if (p_e >= 1.0) {
    if (warnings)
      warnings->push_back({std::string(warn::kDegenerateMarginals),
                           "chance agreement is 1; kappa undefined", ""});
    return p_o >= 1.0 ? 1.0 : 0.0;
  }
  return (p_o - p_e) / (1.0 - p_e);
}

// One label per cell in fixed (z, y, x) order: the covering block's color,
// or "" for empty. The shared alphabet for structure agreement.
inline std::vector<std::string> occupancy_labels(const StructureState& state) {
  std::map<Cell, std::string> color_at;
  for (const auto& [id, p] : state.placements)
    for (const Cell& c : p.cells()) color_at[c] = p.block.color;

  std::vector<std::string> labels;
  labels.reserve(static_cast<size_t>(kBoardSize * kBoardSize * kBoardSize));
  for (int z = 0; z < kBoardSize; ++z)
    for (int y = 0; y < kBoardSize; ++y)
      for (int x = 0; x < kBoardSize; ++x) {
        const auto it = color_at.find(Cell{x, y, z});
        labels.push_back(it == color_at.end() ? std::string{} : it->second);
      }
  return labels;
}

// Agreement between two annotators' reconstructions of the same structure,
// as kappa over per-cell occupancy labels.
inline double structure_iaa(const StructureState& a, const StructureState& b,
                            std::vector<Warning>* warnings = nullptr) {
  return cohen_kappa(occupancy_labels(a), occupancy_labels(b), warnings);
}

// Relations readable straight off projected view grids. Arguments are color
// tokens, not block ids: a view carries no identity, so two cells of the
// same color are indistinguishable and atoms deduplicate accordingly.
// Emitted per view: leftof(c_i, c_j, side) for every same-layer filled pair
// with column i < j, nextto for horizontally adjacent cells, on for
// vertically adjacent cells, and on(c, base) for the bottom row.
inline std::set<RelationAtom> view_grid_to_relations(
    const std::vector<SideView>& views,
    const std::vector<std::string>& palette = kDefaultPalette) {
  std::set<RelationAtom> out;
  for (const auto& view : views) {
    for (int col = 0; col < kBoardSize; ++col)
      for (int layer = 0; layer < kBoardSize; ++layer) {
        const std::string& token = view.at(col, layer);
        if (token.empty()) continue;
        if (std::find(palette.begin(), palette.end(), token) == palette.end())
          throw Error(Errc::UnknownColorToken,
                      std::string(side_name(view.side)) + " view cell (" +
                          std::to_string(col) + "," + std::to_string(layer) +
                          "): unknown color token \"" + token + "\"");
      }

    for (int layer = 0; layer < kBoardSize; ++layer)
      for (int ci = 0; ci < kBoardSize; ++ci) {
        if (view.at(ci, layer).empty()) continue;
        for (int cj = ci + 1; cj < kBoardSize; ++cj) {
          if (view.at(cj, layer).empty()) continue;
          out.insert(make_atom(Rel::LeftOf, view.at(ci, layer),
                               view.at(cj, layer), view.side));
          if (cj == ci + 1)
            out.insert(
                make_atom(Rel::NextTo, view.at(ci, layer), view.at(cj, layer)));
        }
      }

    for (int col = 0; col < kBoardSize; ++col) {
      if (!view.at(col, 0).empty())
        out.insert(make_atom(Rel::On, view.at(col, 0), std::string(kBaseArg)));
      for (int layer = 0; layer + 1 < kBoardSize; ++layer)
        if (!view.at(col, layer).empty() && !view.at(col, layer + 1).empty())
          out.insert(make_atom(Rel::On, view.at(col, layer + 1),
                               view.at(col, layer)));
    }
  }
  return out;
}

}  // namespace cgtrack
