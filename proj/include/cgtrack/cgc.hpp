#pragma once

// Belief tracking and common-ground inference over an aligned event timeline.
//
// Three update axioms drive belief revision:
//   - a speaker accepts what they assert,
//   - the builder and every director accept the effects of a board action
//     (the board is mutually observable),
//   - an explicit stance (accept / doubt / negate) updates its holder,
//     except negation, which clears the proposition for everyone.
//
// Common ground for a proposition is the set of participants currently
// accepting it, tracked whenever that set has at least two members.
// Propositions are identified by their canonical relation with the layer
// annotation stripped: a spoken "on(gs1, rs1) at layer 2" and the board
// event "on(gs1, rs1)" are the same claim. Side annotations are kept:
// leftof from the left view and leftof from the right view are distinct.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cgtrack/alignment.hpp"
#include "cgtrack/annotations.hpp"
#include "cgtrack/blockworld.hpp"
#include "cgtrack/common.hpp"
#include "cgtrack/serialize.hpp"

namespace cgtrack {

// One participant's epistemic state. accepted and doubted are disjoint.
struct BeliefState {
  std::set<RelationAtom> accepted;
  std::set<RelationAtom> doubted;

  bool operator==(const BeliefState& o) const {
    return accepted == o.accepted && doubted == o.doubted;
  }
};

// participant name -> state; always holds all four participants.
using BeliefMap = std::map<std::string, BeliefState>;

inline BeliefMap empty_beliefs() {
  BeliefMap m;
  for (const auto& p : kParticipants) m[std::string(p)];
  return m;
}

// Beliefs after applying one timeline event. event_atoms are the atoms the
// event carried, layers intact, so downstream consumers can recover display
// annotations that belief keys drop.
struct BeliefStep {
  std::string event_id;
  double timestamp = 0.0;
  std::vector<RelationAtom> event_atoms;
  BeliefMap beliefs;
};

namespace detail {

inline RelationAtom belief_key(const RelationAtom& a) {
  return a.canonical().without_layer();
}

inline void apply_accept(BeliefMap& m, const std::string& who,
                         const RelationAtom& key) {
  m[who].accepted.insert(key);
  m[who].doubted.erase(key);
}

inline void apply_doubt(BeliefMap& m, const std::string& who,
                        const RelationAtom& key) {
  m[who].doubted.insert(key);
  m[who].accepted.erase(key);
}

inline void apply_negate(BeliefMap& m, const RelationAtom& key) {
  for (auto& [who, st] : m) {
    st.accepted.erase(key);
    st.doubted.erase(key);
  }
}

}  // namespace detail

// Drops events whose propositions never grounded to concrete blocks; belief
// tracking would otherwise have to reason about descriptor placeholders.
inline std::vector<AlignedEvent> filter_grounded(
    const std::vector<AlignedEvent>& timeline,
    std::vector<Warning>* warnings = nullptr) {
  std::vector<AlignedEvent> kept;
  kept.reserve(timeline.size());
  for (const auto& ev : timeline) {
    if (ev.grounded) {
      kept.push_back(ev);
    } else if (warnings) {
      warnings->push_back({std::string(warn::kDroppedItem),
                           "event " + ev.id + " dropped: ungrounded proposition",
                           ev.id});
    }
  }
  return kept;
}

// Applies the update axioms event by event. Returns one step per event,
// including events that change nothing, so callers can audit every state.
// Throws UngroundedProposition if an event still carries descriptor args;
// run filter_grounded first when tolerance is wanted.
inline std::vector<BeliefStep> update_beliefs(
    const std::vector<AlignedEvent>& timeline) {
  std::vector<BeliefStep> steps;
  steps.reserve(timeline.size());
  BeliefMap beliefs = empty_beliefs();

  for (const auto& ev : timeline) {
    if (!ev.grounded) {
      throw Error(Errc::UngroundedProposition,
                  "event " + ev.id + " carries an unresolved descriptor; "
                  "filter or ground it before belief tracking");
    }
    for (const auto& a : ev.atoms) {
      if (arg_is_descriptor(a.arg1) || arg_is_descriptor(a.arg2)) {
        throw Error(Errc::UngroundedProposition,
                    "event " + ev.id + " atom " + a.to_string() +
                    " names a descriptor, not a block");
      }
    }

    if (ev.stance) {
      for (const auto& a : ev.atoms) {
        const RelationAtom key = detail::belief_key(a);
        switch (*ev.stance) {
          case Stance::Accept: detail::apply_accept(beliefs, ev.participant, key); break;
          case Stance::Doubt:  detail::apply_doubt(beliefs, ev.participant, key); break;
          case Stance::Negate: detail::apply_negate(beliefs, key); break;
        }
      }
    } else if (ev.source == Source::Speech) {
      // Saying is believing: the speaker accepts their own assertion.
      // Hearing is not accepting, so nobody else moves.
      for (const auto& a : ev.atoms)
        detail::apply_accept(beliefs, ev.participant, detail::belief_key(a));
    } else if (ev.source == Source::Action) {
      // Acting is believing, and the board is visible to every director.
      for (const auto& a : ev.atoms)
        for (const auto& p : kParticipants)
          detail::apply_accept(beliefs, std::string(p), detail::belief_key(a));
    }
    // Gestures without a stance (deixis, iconic) carry no belief update.

    steps.push_back({ev.id, ev.timestamp, ev.atoms, beliefs});
  }
  return steps;
}

enum class CGKind { Formed, Expanded, Shrunk, Deleted };

inline const char* cg_kind_name(CGKind k) {
  switch (k) {
    case CGKind::Formed:   return "formed";
    case CGKind::Expanded: return "expanded";
    case CGKind::Shrunk:   return "shrunk";
    case CGKind::Deleted:  return "deleted";
  }
  return "?";
}

inline CGKind parse_cg_kind(const std::string& s) {
  if (s == "formed")   return CGKind::Formed;
  if (s == "expanded") return CGKind::Expanded;
  if (s == "shrunk")   return CGKind::Shrunk;
  if (s == "deleted")  return CGKind::Deleted;
  throw Error(Errc::SchemaError, "unknown common-ground event kind: " + s);
}

// One change to a proposition's common-ground set. participants is the set
// AFTER the change; it has >= 2 members except for deleted records, which
// document the dissolution (0 after a negation, possibly 1 after doubt).
// layer is display metadata recovered from event atoms; it never affects
// proposition identity.
struct CGRecord {
  std::string id;  // "cg0", "cg1", ... in emission order
  double timestamp = 0.0;
  CGKind kind = CGKind::Formed;
  RelationAtom atom;
  std::set<std::string> participants;
  std::optional<int> layer;
  std::string event_id;  // timeline event that triggered the change
};

// Scans the belief sequence and emits a CGRecord whenever the accepter set
// of some proposition changes while it has, or had, two or more members.
// Records within one step come out in atom order; ids are sequential.
inline std::vector<CGRecord> infer_common_ground(
    const std::vector<BeliefStep>& steps) {
  std::vector<CGRecord> records;
  std::map<RelationAtom, std::set<std::string>> active;  // CG sets, size >= 2
  std::map<RelationAtom, int> display_layer;

  for (const auto& step : steps) {
    for (const auto& a : step.event_atoms)
      if (a.layer) display_layer[detail::belief_key(a)] = *a.layer;

    // Every proposition anyone accepts, plus any active CG whose last
    // accepter may just have withdrawn.
    std::set<RelationAtom> touched;
    for (const auto& [who, st] : step.beliefs)
      touched.insert(st.accepted.begin(), st.accepted.end());
    for (const auto& [key, members] : active) touched.insert(key);

    for (const auto& key : touched) {
      std::set<std::string> now;
      for (const auto& [who, st] : step.beliefs)
        if (st.accepted.count(key)) now.insert(who);

      const auto it = active.find(key);
      const bool was_active = it != active.end();

      if (now.size() >= 2) {
        if (!was_active) {
          records.push_back({"", step.timestamp, CGKind::Formed, key, now,
                             std::nullopt, step.event_id});
          active[key] = now;
        } else if (now != it->second) {
          const CGKind kind = now.size() > it->second.size() ? CGKind::Expanded
                                                             : CGKind::Shrunk;
          records.push_back({"", step.timestamp, kind, key, now, std::nullopt,
                             step.event_id});
          it->second = now;
        }
      } else if (was_active) {
        records.push_back({"", step.timestamp, CGKind::Deleted, key, now,
                           std::nullopt, step.event_id});
        active.erase(it);
      }
    }
  }

  for (size_t i = 0; i < records.size(); ++i) {
    records[i].id = "cg" + std::to_string(i);
    const auto dl = display_layer.find(records[i].atom);
    if (dl != display_layer.end()) records[i].layer = dl->second;
  }
  return records;
}

// Convenience for the full pipeline: beliefs then records in one call.
inline std::vector<CGRecord> track_common_ground(
    const std::vector<AlignedEvent>& timeline) {
  return infer_common_ground(update_beliefs(timeline));
}

// The propositions whose common-ground set is alive (>= 2 accepters) at
// time `at`, replayed from the record stream. Records at exactly `at` count.
inline std::set<RelationAtom> cg_relation_set(
    const std::vector<CGRecord>& records, double at) {
  std::set<RelationAtom> alive;
  for (const auto& r : records) {
    if (r.timestamp > at) break;
    if (r.kind == CGKind::Deleted) alive.erase(r.atom);
    else alive.insert(r.atom);
  }
  return alive;
}

// Like cg_relation_set, but keeps the participant sets: proposition ->
// current accepters, for every proposition alive at time `at`.
inline std::map<RelationAtom, std::set<std::string>> cg_participant_map(
    const std::vector<CGRecord>& records, double at) {
  std::map<RelationAtom, std::set<std::string>> alive;
  for (const auto& r : records) {
    if (r.timestamp > at) break;
    if (r.kind == CGKind::Deleted) alive.erase(r.atom);
    else alive[r.atom] = r.participants;
  }
  return alive;
}

// Timeline interval between successive common-ground updates. Indices are
// 1-based. Turn 1 starts at the session start (t = 0); each turn ends at
// its boundary record's timestamp, inclusive. A trailing turn without a
// boundary collects events after the last record.
struct Turn {
  int index = 0;
  double t_start = 0.0;
  double t_end = 0.0;
  std::vector<std::string> event_ids;
  std::optional<std::string> boundary_record;
};

// Partitions the timeline at the distinct record timestamps. Several records
// sharing a timestamp close a single turn, attributed to the last of them.
// With no records at all the whole timeline is one turn.
inline std::vector<Turn> segment_turns(const std::vector<AlignedEvent>& events,
                                       const std::vector<CGRecord>& records) {
  // distinct boundary times with the last record id at each
  std::vector<std::pair<double, std::string>> bounds;
  for (const auto& r : records) {
    if (!bounds.empty() && bounds.back().first == r.timestamp)
      bounds.back().second = r.id;
    else
      bounds.emplace_back(r.timestamp, r.id);
  }

  std::vector<Turn> turns;
  size_t next_event = 0;
  double start = 0.0;
  for (const auto& [t, rid] : bounds) {
    Turn turn;
    turn.index = static_cast<int>(turns.size()) + 1;
    turn.t_start = start;
    turn.t_end = t;
    turn.boundary_record = rid;
    while (next_event < events.size() && events[next_event].timestamp <= t)
      turn.event_ids.push_back(events[next_event++].id);
    turns.push_back(std::move(turn));
    start = t;
  }

  if (next_event < events.size() || turns.empty()) {
    Turn turn;
    turn.index = static_cast<int>(turns.size()) + 1;
    turn.t_start = start;
    turn.t_end = start;
    while (next_event < events.size()) {
      turn.t_end = events[next_event].timestamp;
      turn.event_ids.push_back(events[next_event++].id);
    }
    turns.push_back(std::move(turn));
  }
  return turns;
}

inline nlohmann::json cg_record_to_json(const CGRecord& r) {
  nlohmann::json j;
  j["id"] = r.id;
  j["t"] = r.timestamp;
  j["kind"] = cg_kind_name(r.kind);
  j["atom"] = atom_to_json(r.atom);
  j["participants"] = r.participants;
  if (r.layer) j["layer"] = *r.layer;
  j["event"] = r.event_id;
  return j;
}

inline CGRecord cg_record_from_json(const nlohmann::json& j) {
  CGRecord r;
  r.id = j.at("id").get<std::string>();
  r.timestamp = j.at("t").get<double>();
  r.kind = parse_cg_kind(j.at("kind").get<std::string>());
  r.atom = atom_from_json(j.at("atom"));
  for (const auto& p : j.at("participants")) {
    const std::string who = p.get<std::string>();
    if (!is_participant(who))
      throw Error(Errc::UnknownParticipant, "common-ground record " + r.id +
                  " names unknown participant: " + who);
    r.participants.insert(who);
  }
  if (j.contains("layer")) r.layer = j.at("layer").get<int>();
  r.event_id = j.value("event", std::string{});
  return r;
}

inline nlohmann::json turn_to_json(const Turn& t) {
  nlohmann::json j;
  j["index"] = t.index;
  j["t_start"] = t.t_start;
  j["t_end"] = t.t_end;
  j["events"] = t.event_ids;
  if (t.boundary_record) j["boundary"] = *t.boundary_record;
  return j;
}

inline Turn turn_from_json(const nlohmann::json& j) {
  Turn t;
  t.index = j.at("index").get<int>();
  t.t_start = j.at("t_start").get<double>();
  t.t_end = j.at("t_end").get<double>();
  for (const auto& e : j.at("events")) t.event_ids.push_back(e.get<std::string>());
  if (j.contains("boundary")) t.boundary_record = j.at("boundary").get<std::string>();
  return t;
}

}  // namespace cgtrack
