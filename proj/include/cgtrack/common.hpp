#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cgtrack {

// Error codes cover every fatal failure the library can raise. Non-fatal
// findings travel as Warning values instead of exceptions.
enum class Errc {
  OccupiedCell,
  UnsupportedPlacement,
  UnknownBlock,
  OutOfBounds,
  DuplicateBlockId,
  ReplayMismatch,
  NonMonotonicTimestamps,
  SchemaError,
  UnknownRelation,
  UnknownParticipant,
  MalformedGraph,
  MissingRole,
  DanglingPropositionRef,
  UnknownStance,
  UngroundedProposition,
  TurnCountMismatch,
  LengthMismatch,
  BadGridShape,
  UnknownColorToken,
  MissingInput,
  UnrecognizedLayout,
  Timeout,
  TransportError,
  EndpointRefusal,
  UsageError,
  IoError,
};

inline std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::OccupiedCell: return "OccupiedCell";
    case Errc::UnsupportedPlacement: return "UnsupportedPlacement";
    case Errc::UnknownBlock: return "UnknownBlock";
    case Errc::OutOfBounds: return "OutOfBounds";
    case Errc::DuplicateBlockId: return "DuplicateBlockId";
    case Errc::ReplayMismatch: return "ReplayMismatch";
    case Errc::NonMonotonicTimestamps: return "NonMonotonicTimestamps";
    case Errc::SchemaError: return "SchemaError";
    case Errc::UnknownRelation: return "UnknownRelation";
    case Errc::UnknownParticipant: return "UnknownParticipant";
    case Errc::MalformedGraph: return "MalformedGraph";
    case Errc::MissingRole: return "MissingRole";
    case Errc::DanglingPropositionRef: return "DanglingPropositionRef";
    case Errc::UnknownStance: return "UnknownStance";
    case Errc::UngroundedProposition: return "UngroundedProposition";
    case Errc::TurnCountMismatch: return "TurnCountMismatch";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::BadGridShape: return "BadGridShape";
    case Errc::UnknownColorToken: return "UnknownColorToken";
    case Errc::MissingInput: return "MissingInput";
    case Errc::UnrecognizedLayout: return "UnrecognizedLayout";
    case Errc::Timeout: return "Timeout";
    case Errc::TransportError: return "TransportError";
    case Errc::EndpointRefusal: return "EndpointRefusal";
    case Errc::UsageError: return "UsageError";
    case Errc::IoError: return "IoError";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

// A non-fatal finding tied to a location in the input (file row, block id,
// cell, ...). `kind` uses the identifiers from the module contracts, e.g.
// "OccupancyConflict" or "UnresolvedDescriptor".
struct Warning {
  std::string kind;
  std::string message;
  std::string context;  // "speech.jsonl:12", "row 3", "" when not applicable

  std::string to_string() const {
    std::string s = kind;
    if (!context.empty()) s += " [" + context + "]";
    s += ": " + message;
    return s;
  }
};

namespace warn {
inline constexpr std::string_view kOccupancyConflict = "OccupancyConflict";
inline constexpr std::string_view kUnsupportedPlacement = "UnsupportedPlacement";
inline constexpr std::string_view kOutOfBounds = "OutOfBounds";
inline constexpr std::string_view kUnresolvedDescriptor = "UnresolvedDescriptor";
inline constexpr std::string_view kLayerConflict = "LayerConflict";
inline constexpr std::string_view kDegenerateMarginals = "DegenerateMarginals";
inline constexpr std::string_view kParseFailure = "ParseFailure";
inline constexpr std::string_view kEmptyTurn = "EmptyTurn";
inline constexpr std::string_view kDroppedItem = "DroppedItem";
inline constexpr std::string_view kStanceInertEmblem = "StanceInertEmblem";
inline constexpr std::string_view kUnknownColumn = "UnknownColumn";
inline constexpr std::string_view kReplayError = "ReplayError";
}  // namespace warn

// The four DPIP-style roles: three directors and one builder.
inline const std::array<std::string_view, 4> kParticipants = {"D1", "D2", "D3",
                                                              "Builder"};

inline bool is_participant(std::string_view s) {
  for (auto p : kParticipants)
    if (p == s) return true;
  return false;
}

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

// Accepts common spellings of participant names ("director 2", "Director-2",
// "d2", "the builder") and returns the canonical id, or nullopt.
inline std::optional<std::string> normalize_participant(std::string_view raw) {
  std::string s = ascii_lower(raw);
  std::string compact;
  for (char c : s)
    if (c != ' ' && c != '-' && c != '_' && c != '.') compact += c;
  if (compact == "d1" || compact == "director1" || compact == "directorone")
    return "D1";
  if (compact == "d2" || compact == "director2" || compact == "directortwo")
    return "D2";
  if (compact == "d3" || compact == "director3" || compact == "directorthree")
    return "D3";
  if (compact == "builder" || compact == "thebuilder" || compact == "b")
    return "Builder";
  return std::nullopt;
}

// FNV-1a, used for config hashes in reports.
inline std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string fnv1a_hex(std::string_view data) {
  static const char* digits = "0123456789abcdef";
  std::uint64_t h = fnv1a(data);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[h & 0xF];
    h >>= 4;
  }
  return out;
}

}  // namespace cgtrack
