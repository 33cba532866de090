#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cgtrack/blockworld.hpp"
#include "cgtrack/common.hpp"

namespace cgtrack {

// One observed board configuration. Placements stay in a vector so a
// corrupt capture that lists a block twice can be detected rather than
// silently collapsed.
struct Snapshot {
  double timestamp = 0.0;
  std::vector<Placement> placements;

  StructureState state() const {
    StructureState s;
    s.timestamp = timestamp;
    for (const Placement& p : placements) {
      auto [it, inserted] = s.placements.emplace(p.block.text(), p);
      if (!inserted)
        throw Error(Errc::DuplicateBlockId,
                    "block " + p.block.text() + " appears twice at t=" +
                        std::to_string(timestamp));
    }
    return s;
  }
};

namespace detail {

// Applies pending actions in whatever order succeeds, deterministically:
// each pass scans removals top-down, then moves, then placements bottom-up,
// applying every action the current state admits. Two consecutive
// observations can bundle several physical actions whose legal order is not
// unique; this finds one when it exists.
inline std::vector<ActionEvent> order_step(const StructureState& start,
                                           std::vector<ActionEvent> pending,
                                           StructureState& out_state) {
  auto rank = [](const ActionEvent& a) {
    int kind = a.kind == ActionKind::Remove ? 0
               : a.kind == ActionKind::Move ? 1
                                            : 2;
    int z = a.kind == ActionKind::Remove ? -a.origin->anchor.z
                                         : a.target->anchor.z;
    return std::tuple<int, int, std::string>(kind, z, a.block.text());
  };
  std::sort(pending.begin(), pending.end(),
            [&rank](const ActionEvent& a, const ActionEvent& b) {
              return rank(a) < rank(b);
            });

  std::vector<ActionEvent> ordered;
  StructureState state = start;
  while (!pending.empty()) {
    bool progressed = false;
    for (auto it = pending.begin(); it != pending.end();) {
      try {
        StructureState next = apply_action(state, *it);
        ActionEvent ev = *it;
        ev.relation_summary = summarize_action(state, next, ev);
        state = next;
        ordered.push_back(std::move(ev));
        it = pending.erase(it);
        progressed = true;
      } catch (const Error&) {
        ++it;
      }
    }
    if (!progressed)
      throw Error(Errc::ReplayMismatch,
                  "no action order reproduces the observation at t=" +
                      std::to_string(pending.front().timestamp) +
                      " (first stuck block: " + pending.front().block.text() +
                      ")");
  }
  out_state = state;
  return ordered;
}

}  // namespace detail

// Actions that turn `prev` into `next`, each stamped with next's timestamp.
// The returned order replays cleanly from prev.
inline std::vector<ActionEvent> diff_snapshots(const Snapshot& prev,
                                               const Snapshot& next) {
  StructureState before = prev.state();
  StructureState after = next.state();

  std::vector<ActionEvent> pending;
  for (const auto& [id, p] : before.placements) {
    auto it = after.placements.find(id);
    ActionEvent ev;
    ev.timestamp = next.timestamp;
    ev.block = p.block;
    if (it == after.placements.end()) {
      ev.kind = ActionKind::Remove;
      ev.origin = p;
      pending.push_back(std::move(ev));
    } else if (!(it->second == p)) {
      ev.kind = ActionKind::Move;
      ev.origin = p;
      ev.target = it->second;
      pending.push_back(std::move(ev));
    }
  }
  for (const auto& [id, p] : after.placements) {
    if (before.placements.count(id)) continue;
    ActionEvent ev;
    ev.timestamp = next.timestamp;
    ev.kind = ActionKind::Put;
    ev.block = p.block;
    ev.target = p;
    pending.push_back(std::move(ev));
  }

  StructureState reached;
  auto ordered = detail::order_step(before, std::move(pending), reached);
  if (!(reached == after))
    throw Error(Errc::ReplayMismatch,
                "diff does not reproduce the observation at t=" +
                    std::to_string(next.timestamp));
  return ordered;
}

struct ExtractOptions {
  // A remove followed by a put of the same block within this window is one
  // physical move, unless something else claimed the vacated cells first.
  double move_fuse_window = 5.0;
};

// Full pipeline from observations to a replayable action log: pairwise
// diffs from the empty board, move fusion, then a verification replay that
// recomputes every relation summary.
inline std::vector<ActionEvent> extract_actions(
    const std::vector<Snapshot>& snapshots, const ExtractOptions& opts = {}) {
  if (snapshots.empty()) return {};
  for (size_t i = 1; i < snapshots.size(); ++i) {
    if (!(snapshots[i].timestamp > snapshots[i - 1].timestamp))
      throw Error(Errc::NonMonotonicTimestamps,
                  "observation timestamps must strictly increase (t=" +
                      std::to_string(snapshots[i].timestamp) + " follows t=" +
                      std::to_string(snapshots[i - 1].timestamp) + ")");
  }

  std::vector<ActionEvent> actions;
  Snapshot empty;
  empty.timestamp = snapshots.front().timestamp;
  const Snapshot* prev = &empty;
  for (const Snapshot& snap : snapshots) {
    auto step = diff_snapshots(*prev, snap);
    actions.insert(actions.end(), step.begin(), step.end());
    prev = &snap;
  }

  // Move fusion: a remove whose block is next seen as a put within the
  // window becomes one move at the put's position, provided nothing claimed
  // the vacated cells in between.
  std::vector<bool> drop(actions.size(), false);
  for (size_t i = 0; i < actions.size(); ++i) {
    if (drop[i] || actions[i].kind != ActionKind::Remove) continue;
    std::optional<size_t> j;
    for (size_t k = i + 1; k < actions.size(); ++k) {
      if (!drop[k] && actions[k].block == actions[i].block) {
        j = k;
        break;
      }
    }
    if (!j || actions[*j].kind != ActionKind::Put) continue;
    if (actions[*j].timestamp - actions[i].timestamp > opts.move_fuse_window)
      continue;

    std::set<Cell> origin_cells;
    for (const Cell& c : actions[i].origin->cells()) origin_cells.insert(c);
    bool cells_reused = false;
    for (size_t k = i + 1; k < *j && !cells_reused; ++k) {
      if (drop[k] || !actions[k].target) continue;
      for (const Cell& c : actions[k].target->cells())
        if (origin_cells.count(c)) cells_reused = true;
    }
    if (cells_reused) continue;

    ActionEvent mv;
    mv.timestamp = actions[*j].timestamp;
    mv.kind = ActionKind::Move;
    mv.block = actions[i].block;
    mv.origin = actions[i].origin;
    mv.target = actions[*j].target;
    actions[*j] = std::move(mv);
    drop[i] = true;
  }
  std::vector<ActionEvent> fused;
  fused.reserve(actions.size());
  for (size_t i = 0; i < actions.size(); ++i)
    if (!drop[i]) fused.push_back(std::move(actions[i]));

  // Verification replay: summaries are recomputed because fusion changes
  // the states an action transitions between.
  StructureState state;
  for (ActionEvent& ev : fused) {
    StructureState next = apply_action(state, ev);
    ev.relation_summary = summarize_action(state, next, ev);
    state = next;
  }
  if (!(state == snapshots.back().state()))
    throw Error(Errc::ReplayMismatch,
                "fused action log does not reproduce the final observation");
  return fused;
}

// Replays a log from the empty board, returning every intermediate state
// (element i is the state after actions[0..i]).
inline std::vector<StructureState> replay_states(
    const std::vector<ActionEvent>& actions) {
  std::vector<StructureState> out;
  out.reserve(actions.size());
  StructureState state;
  for (const ActionEvent& ev : actions) {
    state = apply_action(state, ev);
    out.push_back(state);
  }
  return out;
}

// State after applying every action with timestamp <= t.
inline StructureState state_at(const std::vector<ActionEvent>& actions,
                               double t) {
  StructureState state;
  for (const ActionEvent& ev : actions) {
    if (ev.timestamp > t) break;
    state = apply_action(state, ev);
  }
  return state;
}

}  // namespace cgtrack
