#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cgtrack/actionlog.hpp"
#include "cgtrack/annotations.hpp"
#include "cgtrack/blockworld.hpp"
#include "cgtrack/common.hpp"
#include "cgtrack/serialize.hpp"

namespace cgtrack {

enum class Source { Speech, Gesture, Action, Stance };

inline int source_rank(Source s) { return static_cast<int>(s); }

inline std::string_view source_name(Source s) {
  switch (s) {
    case Source::Speech: return "speech";
    case Source::Gesture: return "gesture";
    case Source::Action: return "action";
    case Source::Stance: return "stance";
  }
  return "speech";
}

inline std::optional<Source> parse_source(std::string_view s) {
  std::string l = ascii_lower(s);
  if (l == "speech") return Source::Speech;
  if (l == "gesture") return Source::Gesture;
  if (l == "action") return Source::Action;
  if (l == "stance") return Source::Stance;
  return std::nullopt;
}

struct ActionLink {
  std::string action_id;
  double offset = 0.0;  // 0 inside the window, signed distance otherwise

  bool operator==(const ActionLink&) const = default;
};

// One entry of the merged multimodal timeline. Events are totally ordered
// by (timestamp, source rank, id of the first raw contributor).
struct AlignedEvent {
  std::string id;  // "e0", "e1", ... assigned after sorting
  double timestamp = 0.0;
  Source source = Source::Speech;
  std::string participant;
  std::vector<RelationAtom> atoms;  // actions carry their whole summary
  std::optional<Stance> stance;
  std::optional<std::string> stance_prop;  // proposition a stance refers to
  bool grounded = true;  // false while any argument is still a descriptor
  std::vector<std::string> provenance;
  std::vector<std::string> notes;
  std::vector<ActionLink> links;
};

struct AlignOptions {
  double ground_window = 30.0;  // seconds to look ahead for grounding
  double window_before = 10.0;  // action attachment window
  double window_after = 10.0;
  double emblem_window = 15.0;  // how far back an emblem can reach
};

// ---------------------------------------------------------------------------
// Descriptor grounding.
// ---------------------------------------------------------------------------

struct GroundingResult {
  std::vector<Proposition> props;
  std::vector<Warning> warnings;
};

// Replaces descriptor arguments with the block of the nearest future action
// whose block matches the descriptor's color and shape, looking at most
// `window` seconds ahead. Equidistant candidates resolve to the smallest
// block id. Unmatched descriptors stay in place and are flagged.
inline GroundingResult ground_descriptors(
    std::vector<Proposition> props, const std::vector<ActionEvent>& actions,
    double window = 30.0,
    const std::vector<std::string>& palette = kDefaultPalette) {
  GroundingResult out;
  for (Proposition& p : props) {
    for (std::string* arg : {&p.relation.arg1, &p.relation.arg2}) {
      auto d = parse_descriptor(*arg, palette);
      if (!arg_is_descriptor(*arg, palette) || !d) continue;

      const ActionEvent* best = nullptr;
      for (const ActionEvent& a : actions) {
        if (a.timestamp < p.timestamp) continue;
        if (a.timestamp > p.timestamp + window) break;
        if (a.block.color != d->color || a.block.shape != d->shape) continue;
        if (!best || a.timestamp < best->timestamp ||
            (a.timestamp == best->timestamp &&
             a.block.text() < best->block.text()))
          best = &a;
      }
      if (best) {
        p.grounding_notes.push_back(*arg + " -> " + best->block.text());
        *arg = best->block.text();
      } else {
        out.warnings.push_back(
            {std::string(warn::kUnresolvedDescriptor),
             *arg + " in " + p.id + " has no matching action within " +
                 std::to_string(window) + "s",
             p.id});
      }
    }
    // re-canonicalize: substituted arguments can change nextto ordering
    p.relation = p.relation.canonical();
    out.props.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Action attachment.
// ---------------------------------------------------------------------------

struct TimeSpan {
  std::string id;
  double t_start = 0.0;
  double t_end = 0.0;
};

// Links every span to every action whose timestamp falls inside
// [t_start - before, t_end + after]. The offset is 0 for actions inside the
// bare span and the signed distance to the nearer edge otherwise.
inline std::map<std::string, std::vector<ActionLink>> attach_actions(
    const std::vector<TimeSpan>& spans, const std::vector<ActionEvent>& actions,
    double window_before = 10.0, double window_after = 10.0) {
  std::map<std::string, std::vector<ActionLink>> out;
  for (const TimeSpan& span : spans) {
    std::vector<ActionLink>& links = out[span.id];
    for (size_t i = 0; i < actions.size(); ++i) {
      double t = actions[i].timestamp;
      if (t < span.t_start - window_before || t > span.t_end + window_after)
        continue;
      double offset = 0.0;
      if (t < span.t_start)
        offset = t - span.t_start;
      else if (t > span.t_end)
        offset = t - span.t_end;
      links.push_back({"a" + std::to_string(i), offset});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Layer attachment.
// ---------------------------------------------------------------------------

// Fills in the layer from the board at the proposition's time: vertical
// relations take the lower argument's layer, horizontal ones the shared
// layer. An already-annotated layer is never changed; a disagreement with
// the board is reported.
inline std::pair<Proposition, std::optional<Warning>> attach_layer(
    Proposition prop, const StructureState& state_at_t) {
  auto layer_of = [&state_at_t](const std::string& arg) -> std::optional<int> {
    if (arg == kBaseArg) return -1;  // base sits below layer 0
    auto it = state_at_t.placements.find(arg);
    if (it == state_at_t.placements.end()) return std::nullopt;
    return it->second.anchor.z;
  };

  auto la = layer_of(prop.relation.arg1);
  auto lb = layer_of(prop.relation.arg2);
  std::optional<int> implied;
  if (prop.relation.rel == Rel::On) {
    // on(a, b) cites the layer b sits at; on(a, base) is layer 0
    if (lb) implied = prop.relation.arg2 == kBaseArg ? 0 : *lb;
  } else if (la && lb && *la == *lb) {
    implied = *la;
  }

  if (prop.relation.layer) {
    if (implied && *implied != *prop.relation.layer) {
      Warning w{std::string(warn::kLayerConflict),
                prop.id + " annotated layer " +
                    std::to_string(*prop.relation.layer) +
                    " but the board implies layer " + std::to_string(*implied),
                prop.id};
      return {std::move(prop), std::move(w)};
    }
    return {std::move(prop), std::nullopt};
  }
  if (implied) prop.relation.layer = *implied;
  return {std::move(prop), std::nullopt};
}

// ---------------------------------------------------------------------------
// Timeline merge.
// ---------------------------------------------------------------------------

struct TimelineResult {
  std::vector<AlignedEvent> events;
  std::vector<Warning> warnings;
};

namespace detail {

inline const Proposition* resolve_emblem_target(
    const GestureEvent& g, const std::vector<Proposition>& props,
    double window) {
  const Proposition* best = nullptr;
  for (const Proposition& p : props) {
    if (p.timestamp > g.t_start) continue;
    if (g.t_start - p.timestamp > window) continue;
    if (p.speaker == g.gesturer) continue;
    if (is_participant(g.addressee) && p.speaker != g.addressee) continue;
    if (!best || p.timestamp > best->timestamp ||
        (p.timestamp == best->timestamp && p.id < best->id))
      best = &p;
  }
  return best;
}

}  // namespace detail

// Merges grounded propositions, gestures, actions, and stance labels into
// one ordered timeline. Emblems resolve to a stance on the most recent
// proposition by the addressee (anyone but the gesturer when addressing the
// group); emblems with nothing to land on are kept but marked inert.
inline TimelineResult merge_timeline(const std::vector<Proposition>& props,
                                     const std::vector<GestureEvent>& gestures,
                                     const std::vector<ActionEvent>& actions,
                                     const std::vector<StanceLabel>& stances,
                                     const AlignOptions& opts = {}) {
  TimelineResult out;
  std::map<std::string, const Proposition*> prop_by_id;
  for (const Proposition& p : props) prop_by_id[p.id] = &p;

  std::vector<AlignedEvent> events;

  for (const Proposition& p : props) {
    AlignedEvent ev;
    ev.timestamp = p.timestamp;
    ev.source = Source::Speech;
    ev.participant = p.speaker;
    ev.atoms = {p.relation};
    ev.grounded = !p.has_descriptor();
    ev.provenance = {p.id};
    ev.notes = p.grounding_notes;
    events.push_back(std::move(ev));
  }

  for (size_t i = 0; i < actions.size(); ++i) {
    const ActionEvent& a = actions[i];
    AlignedEvent ev;
    ev.timestamp = a.timestamp;
    ev.source = Source::Action;
    ev.participant = "Builder";  // only the builder touches the board
    ev.atoms.assign(a.relation_summary.begin(), a.relation_summary.end());
    ev.provenance = {"a" + std::to_string(i)};
    ev.notes = {std::string(action_kind_name(a.kind)) + " " + a.block.text()};
    events.push_back(std::move(ev));
  }

  for (const GestureEvent& g : gestures) {
    AlignedEvent ev;
    ev.timestamp = g.t_start;
    ev.source = Source::Gesture;
    ev.participant = g.gesturer;
    ev.provenance = {g.id};
    if (g.kind == GestureKind::Emblem) {
      const Proposition* target =
          detail::resolve_emblem_target(g, props, opts.emblem_window);
      if (target) {
        ev.stance = g.polarity == Polarity::Confirm ? Stance::Accept
                                                    : Stance::Negate;
        ev.stance_prop = target->id;
        ev.atoms = {target->relation};
        ev.grounded = !target->has_descriptor();
        ev.notes.push_back("emblem resolved to " + target->id);
      } else {
        out.warnings.push_back(
            {std::string(warn::kStanceInertEmblem),
             g.id + " (" + (g.polarity == Polarity::Confirm ? "confirm"
                                                            : "deny") +
                 ") has no proposition to land on",
             g.id});
        ev.notes.push_back("inert emblem");
      }
    } else {
      if (g.target) ev.notes.push_back("target " + *g.target);
      if (!g.meaning.empty()) ev.notes.push_back("meaning " + g.meaning);
    }
    events.push_back(std::move(ev));
  }

  for (const StanceLabel& s : stances) {
    AlignedEvent ev;
    ev.timestamp = s.timestamp;
    ev.source = Source::Stance;
    ev.participant = s.participant;
    ev.stance = s.stance;
    ev.stance_prop = s.prop_id;
    ev.provenance = {s.id};
    auto it = prop_by_id.find(s.prop_id);
    if (it == prop_by_id.end())
      throw Error(Errc::DanglingPropositionRef,
                  s.id + " references unknown proposition " + s.prop_id);
    ev.atoms = {it->second->relation};
    ev.grounded = !it->second->has_descriptor();
    events.push_back(std::move(ev));
  }

  std::sort(events.begin(), events.end(),
            [](const AlignedEvent& a, const AlignedEvent& b) {
              if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
              if (a.source != b.source)
                return source_rank(a.source) < source_rank(b.source);
              return a.provenance.front() < b.provenance.front();
            });

  // attach temporally adjacent actions to speech and gesture events
  std::vector<TimeSpan> spans;
  for (const AlignedEvent& ev : events) {
    if (ev.source != Source::Speech && ev.source != Source::Gesture) continue;
    spans.push_back({ev.provenance.front(), ev.timestamp, ev.timestamp});
  }
  for (const GestureEvent& g : gestures)
    for (TimeSpan& span : spans)
      if (span.id == g.id) span.t_end = g.t_end;
  auto links =
      attach_actions(spans, actions, opts.window_before, opts.window_after);

  for (size_t i = 0; i < events.size(); ++i) {
    events[i].id = "e" + std::to_string(i);
    auto it = links.find(events[i].provenance.front());
    if (it != links.end()) events[i].links = it->second;
  }
  out.events = std::move(events);
  return out;
}

// Everything from parsed annotations to the final timeline: grounding,
// layer attachment, then the merge.
inline TimelineResult align_group(std::vector<Proposition> props,
                                  const std::vector<ActionEvent>& actions,
                                  const std::vector<GestureEvent>& gestures,
                                  const std::vector<StanceLabel>& stances,
                                  const AlignOptions& opts = {},
                                  const std::vector<std::string>& palette =
                                      kDefaultPalette) {
  auto grounded =
      ground_descriptors(std::move(props), actions, opts.ground_window, palette);
  TimelineResult out;
  out.warnings = std::move(grounded.warnings);

  for (Proposition& p : grounded.props) {
    StructureState board = state_at(actions, p.timestamp);
    auto [with_layer, warning] = attach_layer(std::move(p), board);
    p = std::move(with_layer);
    if (warning) out.warnings.push_back(std::move(*warning));
  }

  auto merged =
      merge_timeline(grounded.props, gestures, actions, stances, opts);
  out.events = std::move(merged.events);
  for (Warning& w : merged.warnings) out.warnings.push_back(std::move(w));
  return out;
}

// ---------------------------------------------------------------------------
// Serialization (aligned.jsonl records).
// ---------------------------------------------------------------------------

inline json aligned_event_to_json(const AlignedEvent& ev) {
  json j;
  j["id"] = ev.id;
  j["t"] = ev.timestamp;
  j["source"] = std::string(source_name(ev.source));
  j["participant"] = ev.participant;
  json atoms = json::array();
  for (const RelationAtom& a : ev.atoms) atoms.push_back(atom_to_json(a));
  j["atoms"] = std::move(atoms);
  if (ev.stance) j["stance"] = std::string(stance_name(*ev.stance));
  if (ev.stance_prop) j["stance_prop"] = *ev.stance_prop;
  j["grounded"] = ev.grounded;
  j["provenance"] = ev.provenance;
  if (!ev.notes.empty()) j["notes"] = ev.notes;
  if (!ev.links.empty()) {
    json links = json::array();
    for (const ActionLink& l : ev.links) {
      json lj;
      lj["action"] = l.action_id;
      lj["offset"] = l.offset;
      links.push_back(std::move(lj));
    }
    j["links"] = std::move(links);
  }
  return j;
}

inline AlignedEvent aligned_event_from_json(const json& j) {
  AlignedEvent ev;
  for (const char* key : {"id", "t", "source", "participant", "atoms",
                          "grounded", "provenance"})
    if (!j.contains(key))
      throw Error(Errc::SchemaError,
                  std::string("aligned event missing ") + key + ": " + j.dump());
  ev.id = j["id"].get<std::string>();
  ev.timestamp = j["t"].get<double>();
  auto src = parse_source(j["source"].get<std::string>());
  if (!src)
    throw Error(Errc::SchemaError,
                "unrecognized source " + j["source"].get<std::string>());
  ev.source = *src;
  ev.participant = j["participant"].get<std::string>();
  for (const json& aj : j["atoms"]) ev.atoms.push_back(atom_from_json(aj));
  if (j.contains("stance")) {
    auto s = parse_stance(j["stance"].get<std::string>());
    if (!s)
      throw Error(Errc::UnknownStance, j["stance"].get<std::string>());
    ev.stance = *s;
  }
  if (j.contains("stance_prop"))
    ev.stance_prop = j["stance_prop"].get<std::string>();
  ev.grounded = j["grounded"].get<bool>();
  ev.provenance = j["provenance"].get<std::vector<std::string>>();
  if (j.contains("notes"))
    ev.notes = j["notes"].get<std::vector<std::string>>();
  if (j.contains("links"))
    for (const json& lj : j["links"])
      ev.links.push_back(
          {lj["action"].get<std::string>(), lj["offset"].get<double>()});
  return ev;
}

}  // namespace cgtrack
