#pragma once

// Group loading and the four evaluation pipelines:
//   1  actions per turn -> model -> view grids -> relations, vs truth grids
//   2  aligned events per turn -> model -> relations, vs derived truth
//   3  inferred common ground per turn, vs derived truth (no model)
//   4  aligned events per turn -> model -> shared-belief keys, vs records
// Per-turn sets are cumulative states after each turn by default; delta
// mode scores the symmetric difference between consecutive states instead.
// The global score is always the dice of the final cumulative states.

#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cgtrack/actionlog.hpp"
#include "cgtrack/alignment.hpp"
#include "cgtrack/annotations.hpp"
#include "cgtrack/blockworld.hpp"
#include "cgtrack/cgc.hpp"
#include "cgtrack/common.hpp"
#include "cgtrack/llm.hpp"
#include "cgtrack/metrics.hpp"
#include "cgtrack/serialize.hpp"

namespace cgtrack {

struct PipelineOptions {
  AlignOptions align;
  ExtractOptions extract;
};

// A group's annotation files run through the whole pipeline: parsed,
// replayed, aligned, and tracked. Everything downstream reads from here.
struct GroupData {
  std::string name;
  GroupConfig config;
  std::vector<Proposition> props;
  SatLog sat;
  std::vector<GestureEvent> gestures;
  std::vector<StanceLabel> stances;
  std::vector<ActionEvent> actions;
  std::vector<AlignedEvent> timeline;     // full aligned timeline
  std::vector<AlignedEvent> cg_timeline;  // grounded events only
  std::vector<BeliefStep> belief_steps;
  std::vector<CGRecord> records;
  std::vector<Turn> turns;
  std::vector<Warning> warnings;
};

inline GroupData load_group(const std::filesystem::path& dir,
                            const PipelineOptions& opts = {}) {
  if (!std::filesystem::is_directory(dir))
    throw Error(Errc::MissingInput, "group directory not found: " + dir.string());
  for (const char* name :
       {"speech.jsonl", "sat_log.json", "gestures.jsonl", "stances.jsonl"})
    if (!std::filesystem::exists(dir / name))
      throw Error(Errc::MissingInput, "missing " + std::string(name) + " in " +
                                          dir.string());

  GroupData g;
  g.name = dir.filename().string();
  g.config = load_group_config(dir);
  g.props = parse_speech_props((dir / "speech.jsonl").string(), g.config);
  g.sat = parse_sat_log((dir / "sat_log.json").string(), g.config);
  g.gestures = parse_gestures((dir / "gestures.jsonl").string(), g.config);
  std::set<std::string> prop_ids;
  for (const auto& p : g.props) prop_ids.insert(p.id);
  g.stances = parse_stances((dir / "stances.jsonl").string(), prop_ids);

  g.warnings = g.sat.warnings;
  g.actions = extract_actions(g.sat.snapshots, opts.extract);

  auto aligned = align_group(g.props, g.actions, g.gestures, g.stances,
                             opts.align, g.config.palette);
  g.timeline = std::move(aligned.events);
  for (auto& w : aligned.warnings) g.warnings.push_back(std::move(w));

  g.cg_timeline = filter_grounded(g.timeline, &g.warnings);
  g.belief_steps = update_beliefs(g.cg_timeline);
  g.records = infer_common_ground(g.belief_steps);
  g.turns = segment_turns(g.timeline, g.records);
  return g;
}

struct TurnScore {
  int turn = 0;
  double dsc = 0.0;
  int parse_failures = 0;
};

struct ExperimentReport {
  int experiment = 0;
  std::string group;
  double average_dsc = 0.0;
  double global_dsc = 0.0;
  std::vector<TurnScore> per_turn;
  int parse_failures = 0;
  bool delta_mode = false;
  std::string config_hash;
  std::vector<Warning> warnings;
};

// Raw model text for one prompt. Tests bind oracles or canned scripts;
// production binds query_model over a real or mock transport.
using QueryFn = std::function<std::string(const std::string&)>;

namespace detail {

inline std::set<RelationAtom> strip_layers(const std::set<RelationAtom>& in) {
  std::set<RelationAtom> out;
  for (const auto& a : in) out.insert(a.without_layer());
  return out;
}

template <typename T>
std::set<T> symmetric_difference(const std::set<T>& cur,
                                 const std::set<T>& prev) {
  std::set<T> out;
  for (const auto& x : cur)
    if (!prev.count(x)) out.insert(x);
  for (const auto& x : prev)
    if (!cur.count(x)) out.insert(x);
  return out;
}

// Events of one turn, resolved through the id lists segment_turns built.
inline std::vector<AlignedEvent> turn_events(const GroupData& g,
                                             const Turn& turn) {
  std::map<std::string, const AlignedEvent*> by_id;
  for (const auto& ev : g.timeline) by_id[ev.id] = &ev;
  std::vector<AlignedEvent> out;
  for (const auto& id : turn.event_ids) {
    const auto it = by_id.find(id);
    if (it != by_id.end()) out.push_back(*it->second);
  }
  return out;
}

// Turn 1 is closed on both ends; later turns are half-open at the start.
inline bool in_turn(const Turn& turn, double t) {
  return (turn.index == 1 || t > turn.t_start) && t <= turn.t_end;
}

inline std::vector<ActionEvent> turn_actions(const GroupData& g,
                                             const Turn& turn) {
  std::vector<ActionEvent> out;
  for (const auto& a : g.actions)
    if (in_turn(turn, a.timestamp)) out.push_back(a);
  return out;
}

inline std::string render_grid_summary(const StructureState& state) {
  nlohmann::json j;
  for (Side side : kAllSides)
    j[std::string(side_name(side))] =
        view_to_json(project_side_view(state, side))["rows"];
  return j.dump();
}

inline std::string render_relation_summary(const std::set<RelationAtom>& atoms) {
  if (atoms.empty()) return "(no relations yet)";
  std::string out;
  for (const auto& a : atoms) out += (out.empty() ? "" : "\n") + a.to_display_string();
  return out;
}

inline std::string render_belief_summary(const GroupData& g, double at) {
  // beliefs after the last grounded event at or before `at`
  const BeliefMap* beliefs = nullptr;
  for (const auto& step : g.belief_steps) {
    if (step.timestamp > at) break;
    beliefs = &step.beliefs;
  }
  std::string out;
  if (!beliefs) {
    out = "(no prior beliefs)";
  } else {
    for (const auto& [who, st] : *beliefs) {
      out += who + " accepts: ";
      if (st.accepted.empty()) {
        out += "(nothing)";
      } else {
        bool first = true;
        for (const auto& a : st.accepted) {
          out += (first ? "" : "; ") + a.to_display_string();
          first = false;
        }
      }
      out += "\n";
    }
  }
  out += "shared: ";
  const auto shared = cg_participant_map(g.records, at);
  if (shared.empty()) {
    out += "(none)";
  } else {
    bool first = true;
    for (const auto& [atom, who] : shared) {
      std::string names;
      for (const auto& p : who) names += (names.empty() ? "" : ",") + p;
      out += (first ? "" : "; ") + ("{" + names + "} " + atom.to_display_string());
      first = false;
    }
  }
  return out;
}

inline int count_parse_failures(const std::vector<Warning>& ws, size_t from) {
  int n = 0;
  for (size_t i = from; i < ws.size(); ++i)
    if (ws[i].kind == warn::kParseFailure) ++n;
  return n;
}

template <typename T>
ExperimentReport score_turns(int experiment, const GroupData& g,
                             const std::vector<std::set<T>>& pred,
                             const std::vector<std::set<T>>& truth,
                             bool delta_mode,
                             std::vector<TurnScore> per_turn_seed) {
  ExperimentReport rep;
  rep.experiment = experiment;
  rep.group = g.name;
  rep.delta_mode = delta_mode;
  rep.per_turn = std::move(per_turn_seed);
  rep.per_turn.resize(pred.size());

  std::set<T> prev_pred, prev_truth;
  double sum = 0.0;
  for (size_t k = 0; k < pred.size(); ++k) {
    double d;
    if (delta_mode) {
      d = dice(symmetric_difference(pred[k], prev_pred),
               symmetric_difference(truth[k], prev_truth));
      prev_pred = pred[k];
      prev_truth = truth[k];
    } else {
      d = dice(pred[k], truth[k]);
    }
    rep.per_turn[k].turn = static_cast<int>(k) + 1;
    rep.per_turn[k].dsc = d;
    sum += d;
  }
  rep.average_dsc = pred.empty() ? 1.0 : sum / static_cast<double>(pred.size());
  rep.global_dsc = pred.empty() ? 1.0 : dice(pred.back(), truth.back());
  for (const auto& ts : rep.per_turn) rep.parse_failures += ts.parse_failures;
  return rep;
}

}  // namespace detail

// Runs one experiment over a loaded group. Experiments 1, 2, and 4 need a
// query function; experiment 3 is purely inferential.
inline ExperimentReport run_experiment(int experiment, const GroupData& g,
                                       const QueryFn& query = {},
                                       bool delta_mode = false) {
  if (experiment < 1 || experiment > 4)
    throw Error(Errc::UsageError,
                "experiment must be 1, 2, 3, or 4; got " +
                    std::to_string(experiment));
  if (experiment != 3 && !query)
    throw Error(Errc::UsageError, "experiment " + std::to_string(experiment) +
                                      " needs a model (or mock) to query");

  const auto& palette = g.config.palette;
  std::vector<Warning> warnings;
  std::vector<TurnScore> seed(g.turns.size());

  // truth state after each turn
  std::vector<StructureState> states;
  states.reserve(g.turns.size());
  for (const auto& turn : g.turns)
    states.push_back(state_at(g.actions, turn.t_end));

  std::vector<std::set<RelationAtom>> pred_atoms, truth_atoms;
  std::vector<std::set<CGKey>> pred_keys, truth_keys;

  for (size_t k = 0; k < g.turns.size(); ++k) {
    const Turn& turn = g.turns[k];
    const StructureState prior_state =
        k == 0 ? StructureState{} : states[k - 1];

    switch (experiment) {
      case 1: {
        std::vector<SideView> truth_views;
        for (Side side : kAllSides)
          truth_views.push_back(project_side_view(states[k], side));
        truth_atoms.push_back(view_grid_to_relations(truth_views, palette));

        const std::string prompt = build_prompt_actions(
            detail::turn_actions(g, turn),
            k == 0 ? "" : detail::render_grid_summary(prior_state),
            &warnings);
        const size_t before = warnings.size();
        pred_atoms.push_back(parse_structure_response(query(prompt), 1,
                                                      palette, &warnings));
        seed[k].parse_failures = detail::count_parse_failures(warnings, before);
        break;
      }
      case 2: {
        truth_atoms.push_back(
            detail::strip_layers(derive_relations_all_sides(states[k])));
        const std::string prior =
            k == 0 ? "" : detail::render_relation_summary(truth_atoms[k - 1]);
        const std::string prompt =
            build_prompt(2, detail::turn_events(g, turn), prior, &warnings);
        const size_t before = warnings.size();
        pred_atoms.push_back(detail::strip_layers(parse_structure_response(
            query(prompt), 2, palette, &warnings)));
        seed[k].parse_failures = detail::count_parse_failures(warnings, before);
        break;
      }
      case 3: {
        truth_atoms.push_back(
            detail::strip_layers(derive_relations_all_sides(states[k])));
        pred_atoms.push_back(
            detail::strip_layers(cg_relation_set(g.records, turn.t_end)));
        break;
      }
      case 4: {
        std::set<CGKey> truth;
        for (const auto& [atom, who] : cg_participant_map(g.records, turn.t_end))
          truth.insert(CGKey{who, atom});
        truth_keys.push_back(std::move(truth));

        const std::string prompt = build_prompt(
            4, detail::turn_events(g, turn),
            k == 0 ? "" : detail::render_belief_summary(g, turn.t_start),
            &warnings);
        const size_t before = warnings.size();
        pred_keys.push_back(parse_cg_response(query(prompt), &warnings));
        seed[k].parse_failures = detail::count_parse_failures(warnings, before);
        break;
      }
    }
  }

  ExperimentReport rep =
      experiment == 4
          ? detail::score_turns(experiment, g, pred_keys, truth_keys,
                                delta_mode, std::move(seed))
          : detail::score_turns(experiment, g, pred_atoms, truth_atoms,
                                delta_mode, std::move(seed));
  rep.warnings = std::move(warnings);
  return rep;
}

inline nlohmann::json report_to_json(const ExperimentReport& r) {
  nlohmann::json j;
  j["experiment"] = r.experiment;
  j["group"] = r.group;
  j["average_dsc"] = r.average_dsc;
  j["global_dsc"] = r.global_dsc;
  j["delta_mode"] = r.delta_mode;
  j["parse_failures"] = r.parse_failures;
  if (!r.config_hash.empty()) j["config_hash"] = r.config_hash;
  j["per_turn"] = nlohmann::json::array();
  for (const auto& ts : r.per_turn)
    j["per_turn"].push_back({{"turn", ts.turn},
                             {"dsc", ts.dsc},
                             {"parse_failures", ts.parse_failures}});
  j["warnings"] = nlohmann::json::array();
  for (const auto& w : r.warnings)
    j["warnings"].push_back({{"kind", w.kind},
                             {"message", w.message},
                             {"context", w.context}});
  return j;
}

inline ExperimentReport report_from_json(const nlohmann::json& j) {
  ExperimentReport r;
  r.experiment = j.at("experiment").get<int>();
  r.group = j.at("group").get<std::string>();
  r.average_dsc = j.at("average_dsc").get<double>();
  r.global_dsc = j.at("global_dsc").get<double>();
  r.delta_mode = j.value("delta_mode", false);
  r.parse_failures = j.value("parse_failures", 0);
  r.config_hash = j.value("config_hash", std::string());
  if (j.contains("per_turn"))
    for (const auto& tj : j.at("per_turn"))
      r.per_turn.push_back({tj.at("turn").get<int>(),
                            tj.at("dsc").get<double>(),
                            tj.value("parse_failures", 0)});
  if (j.contains("warnings"))
    for (const auto& wj : j.at("warnings"))
      r.warnings.push_back({wj.value("kind", std::string()),
                            wj.value("message", std::string()),
                            wj.value("context", std::string())});
  return r;
}

inline std::string report_csv_header() {
  return "group,experiment,average_dsc,global_dsc,turns,parse_failures";
}

inline std::string report_csv_row(const ExperimentReport& r) {
  char avg[32], glob[32];
  std::snprintf(avg, sizeof avg, "%.3f", r.average_dsc);
  std::snprintf(glob, sizeof glob, "%.3f", r.global_dsc);
  return r.group + "," + std::to_string(r.experiment) + "," + avg + "," +
         glob + "," + std::to_string(r.per_turn.size()) + "," +
         std::to_string(r.parse_failures);
}

}  // namespace cgtrack
