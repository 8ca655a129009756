#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "simeval/error.hpp"

namespace simeval {

inline constexpr const char* kSchemaVersion = "1.0";
inline constexpr int kSchemaMajor = 1;
inline constexpr const char* kToolVersion = "1.0.0";

// Doc ids with this prefix mark SERP slots synthesized during ingestion to
// embed a logged click at its reported rank.
inline constexpr const char* kPadDocPrefix = "pad:";

// Numeric codes are part of the wire/embedding contract and must not change.
enum class EventType : int {
  Query = 0,
  SerpView = 1,
  Click = 2,
  Dwell = 3,
  ConvUser = 4,
  ConvSystem = 5,
};
inline constexpr int kEventTypeCount = 6;

const char* to_string(EventType t);
std::optional<EventType> event_type_from_string(std::string_view s);

struct QueryPayload {
  std::string query_text;
  bool operator==(const QueryPayload&) const = default;
};

struct SerpResult {
  std::string doc_id;
  int rank = 0;
  bool operator==(const SerpResult&) const = default;
};

struct SerpPayload {
  std::vector<SerpResult> results;
  bool operator==(const SerpPayload&) const = default;
};

struct ClickPayload {
  std::string doc_id;
  int rank = 0;
  bool operator==(const ClickPayload&) const = default;
};

struct DwellPayload {
  std::string doc_id;
  std::int64_t dwell_ms = 0;
  bool operator==(const DwellPayload&) const = default;
};

struct ConvPayload {
  std::string text;
  bool operator==(const ConvPayload&) const = default;
};

using EventPayload =
    std::variant<QueryPayload, SerpPayload, ClickPayload, DwellPayload, ConvPayload>;

struct Event {
  EventType type = EventType::Query;
  std::int64_t ts_ms = 0;
  std::optional<std::string> query_id;
  EventPayload payload;

  bool operator==(const Event&) const = default;

  const QueryPayload* query() const { return std::get_if<QueryPayload>(&payload); }
  const SerpPayload* serp() const { return std::get_if<SerpPayload>(&payload); }
  const ClickPayload* click() const { return std::get_if<ClickPayload>(&payload); }
  const DwellPayload* dwell() const { return std::get_if<DwellPayload>(&payload); }
  const ConvPayload* conv() const { return std::get_if<ConvPayload>(&payload); }
};

enum class SessionLabel { Real, Simulated };

const char* to_string(SessionLabel l);

struct Session {
  std::string schema_version = kSchemaVersion;
  std::string session_id;
  std::string dataset_id;
  std::optional<std::string> user_hash;
  SessionLabel label = SessionLabel::Real;
  std::optional<std::string> simulator_id;
  std::vector<Event> events;

  bool operator==(const Session&) const = default;
};

enum class ViolationCode {
  EmptySession,
  NonMonotoneTs,
  PayloadTypeMismatch,
  RankOutOfRange,
  SerpRanksNotContiguous,
  SerpDuplicateDoc,
  NegativeDwell,
  ClickWithoutSerp,
  ClickRankOutOfBounds,
  ClickDocMismatch,
  OrphanDwell,
  LabelSimulatorMismatch,
  EmptyRequiredField,
  DuplicateSessionId,  // corpus-level, emitted by readers
};

const char* to_string(ViolationCode c);

struct Violation {
  ViolationCode code;
  int event_index;  // -1 for session-level problems
  std::string detail;
};

// Total over arbitrary in-memory sessions; never throws.
std::vector<Violation> validate_session(const Session& s);

// Per-field fractions of ABSENT optional fields in a corpus:
//   user_hash over sessions, query_id over events.
std::map<std::string, double> compute_missingness(const std::vector<Session>& sessions);

// Drop-reason keys used in manifests.
inline constexpr const char* kDropBelowMinLength = "BELOW_MIN_LENGTH";
inline constexpr const char* kDropValidationFailed = "VALIDATION_FAILED";
inline constexpr const char* kDropParseError = "PARSE_ERROR";

struct LossManifest {
  std::string dataset_id;
  std::string dataset_version = "unversioned";
  std::string schema_version = kSchemaVersion;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::int64_t input_record_count = 0;
  std::int64_t candidate_session_count = 0;
  std::int64_t emitted_session_count = 0;
  std::int64_t emitted_event_count = 0;
  // Records are source rows (one query occurrence each); the identity
  //   input_record_count == emitted_record_count + sum(dropped_records_by_reason)
  // must hold for every ingest.
  std::int64_t emitted_record_count = 0;
  std::map<std::string, std::int64_t> dropped_sessions_by_reason;
  std::map<std::string, std::int64_t> dropped_records_by_reason;
  std::vector<std::string> dropped_fields;
  std::map<std::string, double> missingness;
  double sessionization_timeout_minutes = 0.0;
  int sessionization_min_events = 0;
  std::int64_t timestamp_quantization_ms = 1;
  bool synthetic_serp = false;
  nlohmann::json generator;  // generator/simulator parameters when synthetic

  std::int64_t dropped_total() const;

  nlohmann::json to_json() const;
  static LossManifest from_json(const nlohmann::json& j);
};

struct SessionCorpus {
  std::vector<Session> sessions;
  LossManifest manifest;
};

nlohmann::json session_to_json(const Session& s);
Session session_from_json(const nlohmann::json& j);  // throws Error(Parse)

enum class ReadMode { Strict, Lenient };

// Strict mode aborts on the first batch of bad lines (collecting line
// numbers); lenient mode drops bad lines into the manifest counters.
SessionCorpus read_jsonl(const std::filesystem::path& path,
                         ReadMode mode = ReadMode::Strict);
void write_jsonl(const SessionCorpus& corpus, const std::filesystem::path& path);

void write_manifest(const LossManifest& m, const std::filesystem::path& path);
LossManifest read_manifest(const std::filesystem::path& path);

}  // namespace simeval
