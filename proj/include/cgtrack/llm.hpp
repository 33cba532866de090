#pragma once

// Chat-completion client, prompt builder, and response codecs. Everything
// here is deterministic given its inputs; the network is abstracted behind
// Transport so the whole pipeline runs offline against scripted fixtures.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "cgtrack/alignment.hpp"
#include "cgtrack/blockworld.hpp"
#include "cgtrack/common.hpp"
#include "cgtrack/metrics.hpp"
#include "cgtrack/serialize.hpp"

namespace cgtrack {

// The API key is referenced by environment variable name and resolved at
// request time; neither this struct nor its serialized form ever holds the
// secret value.
struct ModelConfig {
  std::string base_url = "http://localhost:8080";
  std::string model = "test-model";
  std::string api_key_env;  // empty = unauthenticated endpoint
  double temperature = 0.0;
  int max_tokens = 1024;
  double timeout_s = 30.0;
  int retries = 2;
  double backoff_s = 0.5;

  void validate() const {
    if (timeout_s <= 0.0)
      throw Error(Errc::UsageError, "model timeout must be positive");
    if (retries < 0)
      throw Error(Errc::UsageError, "model retries must be non-negative");
    if (backoff_s < 0.0)
      throw Error(Errc::UsageError, "model backoff must be non-negative");
  }
};

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  nlohmann::json j;
  j["base_url"] = c.base_url;
  j["model"] = c.model;
  j["api_key_env"] = c.api_key_env;
  j["temperature"] = c.temperature;
  j["max_tokens"] = c.max_tokens;
  j["timeout_s"] = c.timeout_s;
  j["retries"] = c.retries;
  j["backoff_s"] = c.backoff_s;
  return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.base_url = j.value("base_url", c.base_url);
  c.model = j.value("model", c.model);
  c.api_key_env = j.value("api_key_env", c.api_key_env);
  c.temperature = j.value("temperature", c.temperature);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.timeout_s = j.value("timeout_s", c.timeout_s);
  c.retries = j.value("retries", c.retries);
  c.backoff_s = j.value("backoff_s", c.backoff_s);
  c.validate();
  return c;
}

struct TransportResult {
  int status = 0;
  std::string body;
};

// One POST of a serialized chat request. Implementations throw Error with
// Timeout or TransportError for failures that never produced a status.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual TransportResult post(const std::string& body) = 0;
};

class HttpTransport : public Transport {
 public:
  HttpTransport(std::string base_url, std::string path, double timeout_s,
                std::string api_key_env)
      : base_url_(std::move(base_url)),
        path_(std::move(path)),
        timeout_s_(timeout_s),
        api_key_env_(std::move(api_key_env)) {}

  TransportResult post(const std::string& body) override {
    httplib::Client client(base_url_);
    client.set_connection_timeout(std::chrono::duration<double>(timeout_s_));
    client.set_read_timeout(std::chrono::duration<double>(timeout_s_));

    httplib::Headers headers;
    if (!api_key_env_.empty()) {
      const char* key = std::getenv(api_key_env_.c_str());
      if (!key || !*key)
        throw Error(Errc::UsageError,
                    "environment variable " + api_key_env_ + " is not set");
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      const auto err = res.error();
      if (err == httplib::Error::ConnectionTimeout ||
          err == httplib::Error::Read || err == httplib::Error::Write)
        throw Error(Errc::Timeout, "request to " + base_url_ + " timed out");
      throw Error(Errc::TransportError,
                  "request to " + base_url_ + " failed: " + httplib::to_string(err));
    }
    return {res->status, res->body};
  }

 private:
  std::string base_url_;
  std::string path_;
  double timeout_s_;
  std::string api_key_env_;
};

// Scripted transport for tests and offline runs. Entries are consumed in
// order; each is one of:
//   {"content": "..."}              -> 200 with a completion envelope
//   {"status": 500, "body": "..."}  -> that status verbatim
//   {"error": "timeout"}            -> throws Timeout
// Received request bodies are kept for assertions.
class MockTransport : public Transport {
 public:
  explicit MockTransport(std::vector<nlohmann::json> entries)
      : entries_(std::move(entries)) {}

  static MockTransport from_file(const std::filesystem::path& path) {
    std::vector<nlohmann::json> entries;
    for (const auto& line : read_jsonl(path.string(), /*require_header=*/false).records)
      entries.push_back(line);
    return MockTransport(std::move(entries));
  }

  TransportResult post(const std::string& body) override {
    requests.push_back(nlohmann::json::parse(body));
    if (cursor_ >= entries_.size())
      throw Error(Errc::TransportError, "mock transport: no scripted replies left");
    const nlohmann::json entry = entries_[cursor_++];
    if (entry.contains("error")) {
      if (entry["error"] == "timeout")
        throw Error(Errc::Timeout, "mock transport: scripted timeout");
      throw Error(Errc::TransportError,
                  "mock transport: " + entry["error"].get<std::string>());
    }
    if (entry.contains("status"))
      return {entry["status"].get<int>(), entry.value("body", std::string{})};
    nlohmann::json envelope;
    envelope["choices"] = nlohmann::json::array();
    envelope["choices"].push_back(
        {{"message", {{"content", entry.at("content").get<std::string>()}}}});
    envelope["usage"] = {{"prompt_tokens", 0}, {"completion_tokens", 0}};
    return {200, envelope.dump()};
  }

  std::vector<nlohmann::json> requests;

 private:
  std::vector<nlohmann::json> entries_;
  size_t cursor_ = 0;
};

// Appends one JSON document per line; used for request/response audit logs.
class JsonlLogger {
 public:
  explicit JsonlLogger(const std::filesystem::path& path)
      : out_(path, std::ios::app) {
    if (!out_) throw Error(Errc::IoError, "cannot open log file " + path.string());
  }

  void log(const nlohmann::json& j) {
    out_ << j.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

struct QueryResult {
  std::string text;
  int prompt_tokens = 0;
  int completion_tokens = 0;
  int attempts = 1;
};

// Sends one chat request, retrying transient failures (timeouts, transport
// errors, 5xx) with exponential backoff. Non-2xx below 500 is a refusal and
// is not retried. Authorization never reaches the log: it travels in a
// header while only bodies are logged.
inline QueryResult query_model(const std::string& prompt,
                               const ModelConfig& config, Transport& transport,
                               JsonlLogger* log = nullptr) {
  config.validate();

  nlohmann::json request;
  request["model"] = config.model;
  request["messages"] = nlohmann::json::array();
  request["messages"].push_back({{"role", "user"}, {"content", prompt}});
  request["temperature"] = config.temperature;
  request["max_tokens"] = config.max_tokens;
  const std::string body = request.dump();

  if (log) log->log({{"direction", "request"}, {"body", request}});

  std::vector<std::string> attempt_log;
  bool all_timeouts = true;
  for (int attempt = 0; attempt <= config.retries; ++attempt) {
    if (attempt > 0 && config.backoff_s > 0.0) {
      const double delay = config.backoff_s * static_cast<double>(1 << (attempt - 1));
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
    TransportResult res;
    try {
      res = transport.post(body);
    } catch (const Error& e) {
      attempt_log.push_back("attempt " + std::to_string(attempt + 1) + ": " +
                            e.what());
      if (e.code() != Errc::Timeout) all_timeouts = false;
      continue;
    }

    if (res.status >= 200 && res.status < 300) {
      nlohmann::json envelope;
      try {
        envelope = nlohmann::json::parse(res.body);
      } catch (const nlohmann::json::exception&) {
        throw Error(Errc::TransportError,
                    "endpoint returned unparseable completion body");
      }
      QueryResult out;
      try {
        out.text = envelope.at("choices").at(0).at("message").at("content")
                       .get<std::string>();
      } catch (const nlohmann::json::exception&) {
        throw Error(Errc::TransportError,
                    "completion body lacks choices[0].message.content");
      }
      if (envelope.contains("usage")) {
        out.prompt_tokens = envelope["usage"].value("prompt_tokens", 0);
        out.completion_tokens = envelope["usage"].value("completion_tokens", 0);
      }
      out.attempts = attempt + 1;
      if (log)
        log->log({{"direction", "response"},
                  {"status", res.status},
                  {"attempts", out.attempts},
                  {"body", envelope}});
      return out;
    }

    if (res.status >= 500) {
      attempt_log.push_back("attempt " + std::to_string(attempt + 1) +
                            ": status " + std::to_string(res.status));
      all_timeouts = false;
      continue;
    }

    if (log)
      log->log({{"direction", "response"},
                {"status", res.status},
                {"body", res.body}});
    throw Error(Errc::EndpointRefusal, "endpoint refused with status " +
                                           std::to_string(res.status) + ": " +
                                           res.body);
  }

  std::string joined;
  for (const auto& line : attempt_log) joined += (joined.empty() ? "" : "; ") + line;
  throw Error(all_timeouts ? Errc::Timeout : Errc::TransportError,
              "retries exhausted: " + joined);
}

// ---------------------------------------------------------------------------
// Prompt construction.

inline std::string render_event_line(const AlignedEvent& ev) {
  std::string line = "[t=" + nlohmann::json(ev.timestamp).dump() + "] ";
  auto atoms_text = [&]() {
    std::string s;
    for (size_t i = 0; i < ev.atoms.size(); ++i)
      s += (i ? "; " : "") + ev.atoms[i].to_display_string();
    return s;
  };
  switch (ev.source) {
    case Source::Speech:
      line += ev.participant + " says: " + atoms_text();
      break;
    case Source::Action:
      line += "Builder acts";
      if (!ev.notes.empty()) line += " (" + ev.notes.front() + ")";
      if (!ev.atoms.empty()) line += ": " + atoms_text();
      break;
    case Source::Gesture:
      line += ev.participant + " gestures";
      if (ev.stance == Stance::Accept) line += " agreement";
      else if (ev.stance == Stance::Negate) line += " denial";
      if (!ev.atoms.empty()) line += " about: " + atoms_text();
      else if (!ev.notes.empty()) line += " (" + ev.notes.front() + ")";
      break;
    case Source::Stance:
      line += ev.participant + " " +
              std::string(stance_name(ev.stance.value_or(Stance::Accept))) +
              "s: " + atoms_text();
      break;
  }
  return line;
}

inline std::string render_action_line(const ActionEvent& a) {
  std::string line = "[t=" + nlohmann::json(a.timestamp).dump() + "] ";
  const std::string id = a.block.text();
  switch (a.kind) {
    case ActionKind::Put:
      line += "put " + id + " at " + a.target->anchor.to_string() +
              (a.target->block.shape == Shape::Long
                   ? (a.target->orientation == Orientation::AlongX
                          ? " lying along x"
                          : " lying along y")
                   : "");
      break;
    case ActionKind::Remove:
      line += "remove " + id;
      break;
    case ActionKind::Move:
      line += "move " + id + " from " + a.origin->anchor.to_string() + " to " +
              a.target->anchor.to_string();
      break;
  }
  for (const auto& atom : a.relation_summary)
    line += "\n    now: " + atom.to_display_string();
  return line;
}

namespace detail {

inline std::string prompt_header(const std::string& task,
                                 const std::string& prior_summary,
                                 const std::vector<std::string>& event_lines,
                                 std::vector<Warning>* warnings) {
  std::string p;
  p += "You are observing a collaborative block-building session on a 3x3x3 "
       "board.\n";
  p += "Blocks are named by color initial, shape (s short, l long), and "
       "index, e.g. rs1.\n";
  p += "Task: " + task + "\n\n";
  p += "State before this turn:\n" +
       (prior_summary.empty() ? std::string("(empty board, no prior beliefs)")
                              : prior_summary) +
       "\n\n";
  p += "Events in this turn:\n";
  if (event_lines.empty()) {
    p += "(no events)\n";
    if (warnings)
      warnings->push_back({std::string(warn::kEmptyTurn),
                           "prompt built for a turn without events", ""});
  } else {
    for (const auto& line : event_lines) p += line + "\n";
  }
  p += "\nRespond with exactly one JSON object and no other text.\n";
  return p;
}

}  // namespace detail

// Experiment 1: actions only, grid output.
inline std::string build_prompt_actions(
    const std::vector<ActionEvent>& actions, const std::string& prior_summary,
    std::vector<Warning>* warnings = nullptr) {
  std::vector<std::string> lines;
  lines.reserve(actions.size());
  for (const auto& a : actions) lines.push_back(render_action_line(a));
  std::string p = detail::prompt_header(
      "track the structure and report its three side views after this turn.",
      prior_summary, lines, warnings);
  p += "Schema: {\"front\": G, \"left\": G, \"right\": G} where G is a 3x3 "
       "list of rows, top layer first, each cell a color name (\"red\", "
       "\"green\", \"blue\", \"yellow\") or \"\" for empty.\n";
  return p;
}

// Experiments 2 and 4: aligned multimodal events.
inline std::string build_prompt(int experiment,
                                const std::vector<AlignedEvent>& events,
                                const std::string& prior_summary,
                                std::vector<Warning>* warnings = nullptr) {
  if (experiment != 2 && experiment != 4)
    throw Error(Errc::UsageError,
                "event prompts exist for experiments 2 and 4 only");
  std::vector<std::string> lines;
  lines.reserve(events.size());
  for (const auto& ev : events) lines.push_back(render_event_line(ev));

  if (experiment == 2) {
    std::string p = detail::prompt_header(
        "track the structure and report the spatial relations that hold "
        "after this turn.",
        prior_summary, lines, warnings);
    p += "Schema: {\"relations\": [{\"relation\": \"on|leftof|nextto|behind\", "
         "\"arg1\": \"<block id>\", \"arg2\": \"<block id or base>\", "
         "\"side\": \"front|left|right\" (only for leftof/behind)}]}\n";
    return p;
  }
  std::string p = detail::prompt_header(
      "track what each participant believes and report the common ground "
      "(shared belief set) after this turn.",
      prior_summary, lines, warnings);
  p += "Schema: {\"beliefs\": {\"D1\": [R], \"D2\": [R], \"D3\": [R], "
       "\"Builder\": [R]}, \"common_ground\": [{\"participants\": "
       "[\"D1\", \"D2\"], \"relation\": R}]} where R is {\"relation\": ..., "
       "\"arg1\": ..., \"arg2\": ..., \"side\"?: ...}. List a common_ground "
       "entry only when two or more participants share the belief.\n";
  return p;
}

// ---------------------------------------------------------------------------
// Response parsing. Never throws on arbitrary text: unusable content
// degrades to an empty result plus warnings, and is scored as-is.

// First balanced top-level JSON object in the text, brace-matched with
// string and escape awareness.
inline std::optional<std::string> extract_first_json_object(
    const std::string& text) {
  for (size_t start = text.find('{'); start != std::string::npos;
       start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (escaped) {
        escaped = false;
      } else if (in_string) {
        if (c == '\\') escaped = true;
        else if (c == '"') in_string = false;
      } else if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}') {
        if (--depth == 0) return text.substr(start, i - start + 1);
      }
    }
  }
  return std::nullopt;
}

namespace detail {

inline void warn_parse(std::vector<Warning>* warnings, const std::string& msg,
                       const std::string& context = "") {
  if (warnings)
    warnings->push_back({std::string(warn::kParseFailure), msg, context});
}

// 3x3 rows (top layer first) -> SideView, coercing anything unusable to
// empty cells. Returns nullopt only when the shape is beyond repair.
inline std::optional<SideView> sanitize_grid(const nlohmann::json& j,
                                             Side side,
                                             const std::vector<std::string>& palette,
                                             std::vector<Warning>* warnings) {
  const nlohmann::json* rows = &j;
  if (j.is_object() && j.contains("rows")) rows = &j.at("rows");
  if (!rows->is_array() || rows->size() != static_cast<size_t>(kBoardSize)) {
    warn_parse(warnings, std::string(side_name(side)) + " grid is not 3x3");
    return std::nullopt;
  }
  nlohmann::json clean = nlohmann::json::array();
  for (const auto& row : *rows) {
    if (!row.is_array() || row.size() != static_cast<size_t>(kBoardSize)) {
      warn_parse(warnings, std::string(side_name(side)) + " grid is not 3x3");
      return std::nullopt;
    }
    nlohmann::json clean_row = nlohmann::json::array();
    for (const auto& cell : row) {
      std::string token = cell.is_string() ? cell.get<std::string>() : "";
      if (!token.empty() &&
          std::find(palette.begin(), palette.end(), token) == palette.end()) {
        warn_parse(warnings, std::string(side_name(side)) +
                                 " grid: unknown color token \"" + token +
                                 "\" treated as empty");
        token.clear();
      }
      clean_row.push_back(token);
    }
    clean.push_back(clean_row);
  }
  return view_from_json(clean, side, palette);
}

inline std::optional<RelationAtom> parse_relation_item(
    const nlohmann::json& item, std::vector<Warning>* warnings) {
  if (!item.is_object() || !item.contains("relation") ||
      !item.contains("arg1") || !item.contains("arg2")) {
    warn_parse(warnings, "relation item lacks relation/arg1/arg2: " + item.dump());
    return std::nullopt;
  }
  try {
    const auto rel = parse_rel(item.at("relation").get<std::string>());
    if (!rel) {
      warn_parse(warnings, "unknown relation dropped: " + item.at("relation").dump());
      return std::nullopt;
    }
    std::optional<Side> side;
    if (item.contains("side") && item.at("side").is_string()) {
      side = parse_side(item.at("side").get<std::string>());
      if (!side) {
        warn_parse(warnings, "unknown side dropped: " + item.at("side").dump());
        return std::nullopt;
      }
    }
    std::optional<int> layer;
    if (item.contains("layer") && item.at("layer").is_number_integer())
      layer = item.at("layer").get<int>();
    return make_atom(*rel, item.at("arg1").get<std::string>(),
                     item.at("arg2").get<std::string>(), side, layer);
  } catch (const std::exception& e) {
    warn_parse(warnings, std::string("relation item dropped: ") + e.what());
    return std::nullopt;
  }
}

}  // namespace detail

inline std::set<RelationAtom> parse_structure_response(
    const std::string& text, int experiment,
    const std::vector<std::string>& palette = kDefaultPalette,
    std::vector<Warning>* warnings = nullptr) {
  const auto blob = extract_first_json_object(text);
  if (!blob) {
    detail::warn_parse(warnings, "no JSON object found in model output");
    return {};
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(*blob);
  } catch (const nlohmann::json::exception& e) {
    detail::warn_parse(warnings, std::string("model output is not valid JSON: ") +
                                     e.what());
    return {};
  }

  if (experiment == 1) {
    std::vector<SideView> views;
    for (Side side : kAllSides) {
      const std::string key(side_name(side));
      if (!j.contains(key)) {
        detail::warn_parse(warnings, "missing " + key + " grid");
        continue;
      }
      if (auto view = detail::sanitize_grid(j.at(key), side, palette, warnings))
        views.push_back(std::move(*view));
    }
    return view_grid_to_relations(views, palette);
  }
  if (experiment != 2)
    throw Error(Errc::UsageError, "structure responses exist for experiments 1 and 2");

  std::set<RelationAtom> out;
  if (!j.contains("relations") || !j.at("relations").is_array()) {
    detail::warn_parse(warnings, "response lacks a relations array");
    return out;
  }
  for (const auto& item : j.at("relations"))
    if (auto atom = detail::parse_relation_item(item, warnings))
      out.insert(std::move(*atom));
  return out;
}

// The unit experiment 4 is scored on: a participant set sharing one
// proposition. Layer annotations are stripped, matching belief-key identity.
struct CGKey {
  std::set<std::string> participants;
  RelationAtom atom;

  auto operator<=>(const CGKey&) const = default;

  std::string to_string() const {
    std::string s = "{";
    for (const auto& p : participants) s += (s.size() > 1 ? "," : "") + p;
    return s + "}:" + atom.to_string();
  }
};

inline std::set<CGKey> parse_cg_response(
    const std::string& text, std::vector<Warning>* warnings = nullptr) {
  const auto blob = extract_first_json_object(text);
  if (!blob) {
    detail::warn_parse(warnings, "no JSON object found in model output");
    return {};
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(*blob);
  } catch (const nlohmann::json::exception& e) {
    detail::warn_parse(warnings, std::string("model output is not valid JSON: ") +
                                     e.what());
    return {};
  }
  std::set<CGKey> out;
  if (!j.contains("common_ground") || !j.at("common_ground").is_array()) {
    detail::warn_parse(warnings, "response lacks a common_ground array");
    return out;
  }
  for (const auto& item : j.at("common_ground")) {
    if (!item.is_object() || !item.contains("participants") ||
        !item.contains("relation") || !item.at("participants").is_array()) {
      detail::warn_parse(warnings, "common_ground item dropped: " + item.dump());
      continue;
    }
    CGKey key;
    bool ok = true;
    for (const auto& p : item.at("participants")) {
      const auto norm = p.is_string()
                            ? normalize_participant(p.get<std::string>())
                            : std::nullopt;
      if (!norm) {
        detail::warn_parse(warnings,
                           "unknown participant dropped item: " + p.dump());
        ok = false;
        break;
      }
      key.participants.insert(*norm);
    }
    if (!ok) continue;
    if (key.participants.size() < 2) {
      detail::warn_parse(warnings,
                         "common ground needs two participants: " + item.dump());
      continue;
    }
    auto atom = detail::parse_relation_item(item.at("relation"), warnings);
    if (!atom) continue;
    key.atom = atom->without_layer();
    out.insert(std::move(key));
  }
  return out;
}

}  // namespace cgtrack
