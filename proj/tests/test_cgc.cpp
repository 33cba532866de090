#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cgtrack/cgc.hpp"
#include "support/cg_axiom_cases.hpp"

using namespace cgtrack;
using axioms::mk_action;
using axioms::mk_gesture;
using axioms::mk_speech;
using axioms::mk_stance;

namespace {

// Independent belief tracker keyed by atom strings rather than atom values.
// Deliberately separate from the library code path so the two can disagree.
struct OracleBeliefs {
  std::map<std::string, std::set<std::string>> accepted;  // participant -> keys
  std::map<std::string, std::set<std::string>> doubted;

  static std::string key(const RelationAtom& a) {
    return a.canonical().without_layer().to_string();
  }

  void apply(const AlignedEvent& ev) {
    if (ev.stance) {
      for (const auto& a : ev.atoms) {
        const std::string k = key(a);
        switch (*ev.stance) {
          case Stance::Accept:
            accepted[ev.participant].insert(k);
            doubted[ev.participant].erase(k);
            break;
          case Stance::Doubt:
            doubted[ev.participant].insert(k);
            accepted[ev.participant].erase(k);
            break;
          case Stance::Negate:
            for (const auto& p : kParticipants) {
              accepted[std::string(p)].erase(k);
              doubted[std::string(p)].erase(k);
            }
            break;
        }
      }
    } else if (ev.source == Source::Speech) {
      for (const auto& a : ev.atoms) {
        accepted[ev.participant].insert(key(a));
        doubted[ev.participant].erase(key(a));
      }
    } else if (ev.source == Source::Action) {
      for (const auto& a : ev.atoms)
        for (const auto& p : kParticipants) {
          accepted[std::string(p)].insert(key(a));
          doubted[std::string(p)].erase(key(a));
        }
    }
  }

  std::set<std::string> ground() const {  // keys with >= 2 accepters
    std::map<std::string, int> counts;
    for (const auto& [p, keys] : accepted)
      for (const auto& k : keys) ++counts[k];
    std::set<std::string> out;
    for (const auto& [k, n] : counts)
      if (n >= 2) out.insert(k);
    return out;
  }
};

std::vector<RelationAtom> atom_pool() {
  return {
      make_atom(Rel::On, "gs1", "rs1"),
      make_atom(Rel::On, "rs1", "base"),
      make_atom(Rel::NextTo, "bs1", "rs1"),
      make_atom(Rel::LeftOf, "gs1", "bs1", Side::Left),
      make_atom(Rel::LeftOf, "gs1", "bs1", Side::Right),
      make_atom(Rel::Behind, "ys1", "rs1", Side::Front),
      make_atom(Rel::On, "bl1", "gs1"),
      make_atom(Rel::NextTo, "bl1", "ys1"),
  };
}

std::vector<AlignedEvent> random_timeline(std::mt19937& rng, int n_events) {
  const auto pool = atom_pool();
  auto pick_atom = [&]() {
    RelationAtom a = pool[rng() % pool.size()];
    if (rng() % 3u == 0u) a.layer = static_cast<int>(rng() % 3u);
    return a;
  };
  auto pick_who = [&]() {
    return std::string(kParticipants[rng() % kParticipants.size()]);
  };

  std::vector<AlignedEvent> evs;
  double t = 0.0;
  for (int i = 0; i < n_events; ++i) {
    if (rng() % 4u != 0u) t += 1.0 + static_cast<double>(rng() % 5u);
    const std::string id = "e" + std::to_string(i);
    const unsigned pick = rng() % 10u;
    if (pick < 3) {
      std::vector<RelationAtom> atoms = {pick_atom()};
      if (rng() % 3u == 0u) atoms.push_back(pick_atom());
      evs.push_back(mk_speech(id, t, pick_who(), std::move(atoms)));
    } else if (pick < 5) {
      std::vector<RelationAtom> atoms = {pick_atom()};
      while (rng() % 2u == 0u && atoms.size() < 3) atoms.push_back(pick_atom());
      evs.push_back(mk_action(id, t, std::move(atoms)));
    } else if (pick < 9) {
      const unsigned s = rng() % 10u;
      const Stance stance = s < 5 ? Stance::Accept
                                  : (s < 8 ? Stance::Doubt : Stance::Negate);
      evs.push_back(mk_stance(id, t, pick_who(), stance, pick_atom()));
    } else {
      evs.push_back(mk_gesture(id, t, pick_who()));
    }
  }
  return evs;
}

std::string dump_records(const std::vector<CGRecord>& records) {
  std::string out;
  for (const auto& r : records) out += cg_record_to_json(r).dump() + "\n";
  return out;
}

CGRecord rec(const std::string& id, double t, CGKind kind, RelationAtom atom,
             std::set<std::string> parts) {
  return CGRecord{id, t, kind, std::move(atom), std::move(parts), std::nullopt,
                  ""};
}

}  // namespace

TEST_CASE("axiom dialogues reproduce their hand-traced records") {
  const auto cases = axioms::axiom_cases();
  REQUIRE(cases.size() >= 12);
  for (const auto& c : cases) {
    INFO(c.name);
    CHECK(axioms::run_axiom_case(c) == "");
  }
}

TEST_CASE("negation erases the proposition from every ledger") {
  const RelationAtom P = make_atom(Rel::On, "gs1", "rs1");
  const std::vector<AlignedEvent> timeline = {
      mk_speech("e0", 1, "D1", {P}),
      mk_stance("e1", 2, "D2", Stance::Accept, P),
      mk_stance("e2", 3, "D3", Stance::Doubt, P),
      mk_stance("e3", 4, "D3", Stance::Negate, P),
  };
  const auto steps = update_beliefs(timeline);
  REQUIRE(steps.size() == 4);
  for (const auto& [who, st] : steps.back().beliefs) {
    CHECK(st.accepted.empty());
    CHECK(st.doubted.empty());
  }
  // Before the negation D3's doubt was on record.
  CHECK(steps[2].beliefs.at("D3").doubted.count(P) == 1);
}

TEST_CASE("doubt is participant-local") {
  const RelationAtom P = make_atom(Rel::On, "gs1", "rs1");
  const auto steps = update_beliefs({
      mk_speech("e0", 1, "D1", {P}),
      mk_stance("e1", 2, "D2", Stance::Doubt, P),
  });
  const auto& last = steps.back().beliefs;
  CHECK(last.at("D1").accepted.count(P) == 1);
  CHECK(last.at("D2").doubted.count(P) == 1);
  CHECK(last.at("D3").accepted.empty());
  CHECK(last.at("D3").doubted.empty());
}

TEST_CASE("ungrounded events are rejected or filtered") {
  AlignedEvent ev = mk_speech("e0", 1, "D1",
                              {make_atom(Rel::On, "GreenShort", "rs1")});
  ev.grounded = false;

  SECTION("update_beliefs refuses the flagged event") {
    try {
      update_beliefs({ev});
      FAIL("expected UngroundedProposition");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::UngroundedProposition);
    }
  }

  SECTION("a descriptor argument is caught even if the flag lies") {
    AlignedEvent lied = ev;
    lied.grounded = true;
    try {
      update_beliefs({lied});
      FAIL("expected UngroundedProposition");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::UngroundedProposition);
    }
  }

  SECTION("filter_grounded drops it with a warning") {
    std::vector<Warning> warnings;
    const auto kept = filter_grounded(
        {ev, mk_speech("e1", 2, "D2", {make_atom(Rel::On, "gs1", "rs1")})},
        &warnings);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].id == "e1");
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].kind == warn::kDroppedItem);
    CHECK(warnings[0].context == "e0");
  }
}

TEST_CASE("belief tracking matches the string-keyed oracle") {
  std::mt19937 rng(20260817u);
  for (int trial = 0; trial < 200; ++trial) {
    const auto timeline = random_timeline(rng, 30);
    const auto steps = update_beliefs(timeline);
    REQUIRE(steps.size() == timeline.size());

    OracleBeliefs oracle;
    for (size_t i = 0; i < timeline.size(); ++i) {
      oracle.apply(timeline[i]);
      for (const auto& pv : kParticipants) {
        const std::string p(pv);
        const auto& st = steps[i].beliefs.at(p);
        std::set<std::string> got_acc, got_dbt;
        for (const auto& a : st.accepted) got_acc.insert(a.to_string());
        for (const auto& a : st.doubted) got_dbt.insert(a.to_string());
        REQUIRE(got_acc == oracle.accepted[p]);
        REQUIRE(got_dbt == oracle.doubted[p]);
        // accepted and doubted stay disjoint
        for (const auto& a : st.accepted) REQUIRE(st.doubted.count(a) == 0);
      }
    }
  }
}

TEST_CASE("record stream stays coupled to recomputed ground") {
  std::mt19937 rng(424242u);
  for (int trial = 0; trial < 150; ++trial) {
    const auto timeline = random_timeline(rng, 35);
    const auto steps = update_beliefs(timeline);
    const auto records = infer_common_ground(steps);

    // well-formedness
    double prev_t = 0.0;
    for (size_t i = 0; i < records.size(); ++i) {
      REQUIRE(records[i].id == "cg" + std::to_string(i));
      REQUIRE(records[i].timestamp >= prev_t);
      prev_t = records[i].timestamp;
      if (records[i].kind == CGKind::Deleted)
        REQUIRE(records[i].participants.size() < 2);
      else
        REQUIRE(records[i].participants.size() >= 2);
      REQUIRE(!records[i].event_id.empty());
    }

    // after the last step at each timestamp, the replayed record stream and
    // a from-scratch recomputation of the accepter sets must agree
    OracleBeliefs oracle;
    for (size_t i = 0; i < timeline.size(); ++i) {
      oracle.apply(timeline[i]);
      const bool last_at_t = i + 1 == timeline.size() ||
                             timeline[i + 1].timestamp != timeline[i].timestamp;
      if (!last_at_t) continue;
      std::set<std::string> replayed;
      for (const auto& a : cg_relation_set(records, timeline[i].timestamp))
        replayed.insert(a.to_string());
      REQUIRE(replayed == oracle.ground());
    }
  }
}

TEST_CASE("duplicate negations change nothing") {
  std::mt19937 rng(99u);
  for (int trial = 0; trial < 60; ++trial) {
    const auto timeline = random_timeline(rng, 25);
    std::vector<AlignedEvent> doubled;
    for (const auto& ev : timeline) {
      doubled.push_back(ev);
      if (ev.stance == Stance::Negate) {
        AlignedEvent again = ev;
        again.id += "d";
        doubled.push_back(again);
      }
    }
    const auto base_steps = update_beliefs(timeline);
    const auto dup_steps = update_beliefs(doubled);
    CHECK(base_steps.back().beliefs == dup_steps.back().beliefs);
    CHECK(dump_records(infer_common_ground(base_steps)) ==
          dump_records(infer_common_ground(dup_steps)));
  }
}

TEST_CASE("doubt then accept leaves no trace") {
  std::mt19937 rng(7u);
  int exercised = 0;
  for (int trial = 0; trial < 80; ++trial) {
    const auto timeline = random_timeline(rng, 25);
    const auto steps = update_beliefs(timeline);
    const auto& final_beliefs = steps.back().beliefs;

    // pick some participant holding an accepted atom
    const std::string* who = nullptr;
    const RelationAtom* atom = nullptr;
    for (const auto& [name, st] : final_beliefs) {
      if (!st.accepted.empty()) {
        who = &name;
        atom = &*st.accepted.begin();
        break;
      }
    }
    if (!who) continue;
    ++exercised;

    auto extended = timeline;
    const double t = timeline.back().timestamp + 1.0;
    extended.push_back(mk_stance("xd", t, *who, Stance::Doubt, *atom));
    extended.push_back(mk_stance("xa", t + 1.0, *who, Stance::Accept, *atom));

    const auto ext_steps = update_beliefs(extended);
    CHECK(ext_steps.back().beliefs == final_beliefs);

    const auto base_records = infer_common_ground(steps);
    const auto ext_records = infer_common_ground(ext_steps);
    const double end = t + 1.0;
    std::set<std::string> a, b;
    for (const auto& x : cg_relation_set(base_records, end)) a.insert(x.to_string());
    for (const auto& x : cg_relation_set(ext_records, end)) b.insert(x.to_string());
    CHECK(a == b);
  }
  REQUIRE(exercised > 50);
}

TEST_CASE("turns partition the timeline at record boundaries") {
  SECTION("worked example: records at 50 and 90, events 10..120") {
    std::vector<AlignedEvent> events;
    for (int i = 0; i < 12; ++i)
      events.push_back(mk_gesture("e" + std::to_string(i), 10.0 * (i + 1), "D1"));
    const RelationAtom P = make_atom(Rel::On, "gs1", "rs1");
    const std::vector<CGRecord> records = {
        rec("cg0", 50, CGKind::Formed, P, {"D1", "D2"}),
        rec("cg1", 90, CGKind::Expanded, P, {"D1", "D2", "D3"}),
    };
    const auto turns = segment_turns(events, records);
    REQUIRE(turns.size() == 3);

    CHECK(turns[0].index == 1);
    CHECK(turns[0].t_start == 0.0);
    CHECK(turns[0].t_end == 50.0);
    CHECK(turns[0].event_ids == std::vector<std::string>{"e0", "e1", "e2", "e3", "e4"});
    CHECK(turns[0].boundary_record == "cg0");

    CHECK(turns[1].t_start == 50.0);
    CHECK(turns[1].t_end == 90.0);
    CHECK(turns[1].event_ids == std::vector<std::string>{"e5", "e6", "e7", "e8"});
    CHECK(turns[1].boundary_record == "cg1");

    CHECK(turns[2].t_start == 90.0);
    CHECK(turns[2].t_end == 120.0);
    CHECK(turns[2].event_ids == std::vector<std::string>{"e9", "e10", "e11"});
    CHECK(!turns[2].boundary_record.has_value());
  }

  SECTION("records sharing a timestamp close one turn") {
    const RelationAtom P = make_atom(Rel::On, "gs1", "rs1");
    const RelationAtom Q = make_atom(Rel::On, "rs1", "base");
    const std::vector<CGRecord> records = {
        rec("cg0", 50, CGKind::Formed, P, {"D1", "D2"}),
        rec("cg1", 50, CGKind::Formed, Q, {"D1", "D2"}),
    };
    const std::vector<AlignedEvent> events = {mk_gesture("e0", 50, "D1")};
    const auto turns = segment_turns(events, records);
    REQUIRE(turns.size() == 1);
    CHECK(turns[0].boundary_record == "cg1");
    CHECK(turns[0].event_ids == std::vector<std::string>{"e0"});
  }

  SECTION("no records yields a single turn") {
    const std::vector<AlignedEvent> events = {mk_gesture("e0", 3, "D1"),
                                              mk_gesture("e1", 8, "D2")};
    const auto turns = segment_turns(events, {});
    REQUIRE(turns.size() == 1);
    CHECK(turns[0].t_start == 0.0);
    CHECK(turns[0].t_end == 8.0);
    CHECK(turns[0].event_ids.size() == 2);
    CHECK(!turns[0].boundary_record.has_value());
  }

  SECTION("empty session still has one turn") {
    const auto turns = segment_turns({}, {});
    REQUIRE(turns.size() == 1);
    CHECK(turns[0].index == 1);
    CHECK(turns[0].event_ids.empty());
  }

  SECTION("an event on the boundary belongs to the closing turn") {
    const RelationAtom P = make_atom(Rel::On, "gs1", "rs1");
    const std::vector<CGRecord> records = {
        rec("cg0", 20, CGKind::Formed, P, {"D1", "D2"})};
    const std::vector<AlignedEvent> events = {mk_gesture("e0", 20, "D1")};
    const auto turns = segment_turns(events, records);
    REQUIRE(turns.size() == 1);
    CHECK(turns[0].event_ids == std::vector<std::string>{"e0"});
  }

  SECTION("random timelines: partition property") {
    std::mt19937 rng(31337u);
    for (int trial = 0; trial < 100; ++trial) {
      const auto timeline = random_timeline(rng, 30);
      const auto records = track_common_ground(timeline);
      const auto turns = segment_turns(timeline, records);

      std::set<double> distinct_ts;
      for (const auto& r : records) distinct_ts.insert(r.timestamp);
      const double last_t =
          records.empty() ? -1.0 : records.back().timestamp;
      const bool trailing =
          records.empty() ||
          std::any_of(timeline.begin(), timeline.end(),
                      [&](const AlignedEvent& e) { return e.timestamp > last_t; });
      REQUIRE(turns.size() == distinct_ts.size() + (trailing ? 1 : 0));

      // every event appears in exactly one turn, in timeline order
      std::vector<std::string> seen;
      for (const auto& turn : turns)
        for (const auto& id : turn.event_ids) seen.push_back(id);
      std::vector<std::string> want;
      for (const auto& ev : timeline) want.push_back(ev.id);
      REQUIRE(seen == want);

      // turns abut: each starts where the previous ended
      for (size_t i = 1; i < turns.size(); ++i) {
        REQUIRE(turns[i].t_start == turns[i - 1].t_end);
        REQUIRE(turns[i].index == static_cast<int>(i) + 1);
      }
      if (!turns.empty()) REQUIRE(turns[0].t_start == 0.0);
    }
  }
}

TEST_CASE("cg_relation_set replays the record stream") {
  const RelationAtom P = make_atom(Rel::On, "gs1", "rs1");
  const RelationAtom Q = make_atom(Rel::On, "rs1", "base");
  const std::vector<CGRecord> records = {
      rec("cg0", 10, CGKind::Formed, P, {"D1", "D2"}),
      rec("cg1", 20, CGKind::Formed, Q, {"D1", "D2"}),
      rec("cg2", 30, CGKind::Deleted, P, {"D1"}),
  };
  CHECK(cg_relation_set(records, 5).empty());
  CHECK(cg_relation_set(records, 10) == std::set<RelationAtom>{P});
  CHECK(cg_relation_set(records, 25) == std::set<RelationAtom>{P, Q});
  CHECK(cg_relation_set(records, 30) == std::set<RelationAtom>{Q});
  CHECK(cg_relation_set(records, 1e9) == std::set<RelationAtom>{Q});
}

TEST_CASE("record and turn serialization round-trips") {
  const RelationAtom P = make_atom(Rel::On, "gs1", "rs1", std::nullopt, 1);
  const std::vector<AlignedEvent> timeline = {
      mk_speech("e0", 1, "D1", {P}),
      mk_action("e1", 2, {make_atom(Rel::On, "gs1", "rs1")}),
      mk_stance("e2", 3, "D1", Stance::Negate, P),
  };
  const auto records = track_common_ground(timeline);
  REQUIRE(records.size() == 2);
  CHECK(records[0].kind == CGKind::Formed);
  CHECK(records[0].layer == 1);  // display layer recovered from speech
  CHECK(records[1].kind == CGKind::Deleted);
  CHECK(records[1].participants.empty());

  for (const auto& r : records) {
    const auto j = cg_record_to_json(r);
    const auto back = cg_record_from_json(j);
    CHECK(cg_record_to_json(back).dump() == j.dump());
  }
  CHECK(cg_record_to_json(records[0])["layer"] == 1);
  CHECK(cg_record_to_json(records[0])["participants"].size() == 4);

  const auto turns = segment_turns(timeline, records);
  for (const auto& t : turns) {
    const auto j = turn_to_json(t);
    const auto back = turn_from_json(j);
    CHECK(turn_to_json(back).dump() == j.dump());
  }

  SECTION("bad participant rejected on parse") {
    auto j = cg_record_to_json(records[0]);
    j["participants"].push_back("D9");
    try {
      cg_record_from_json(j);
      FAIL("expected UnknownParticipant");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::UnknownParticipant);
    }
  }
}

TEST_CASE("tracking is byte-deterministic") {
  std::mt19937 rng(1234u);
  const auto timeline = random_timeline(rng, 40);
  const auto once = dump_records(track_common_ground(timeline));
  const auto twice = dump_records(track_common_ground(timeline));
  REQUIRE(!once.empty());
  CHECK(once == twice);
}
