#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "simeval/schema.hpp"

namespace simeval {

std::string sha256_hex(std::string_view data);

// Canonical JSON serialization for hashing: keys sorted, floats whose value
// is integral emitted in integer form, no insignificant whitespace.
std::string canonical_json(const nlohmann::json& j);
std::string config_hash(const nlohmann::json& config);

// One row of an AnonID/Query/QueryTime/ItemRank/ClickURL style web log.
struct RawLogRecord {
  std::string user_key;
  std::string query_text;
  std::int64_t ts_ms = 0;
  std::optional<int> clicked_rank;
  std::optional<std::string> clicked_doc;
};

struct WeblogParseResult {
  std::vector<RawLogRecord> records;
  std::int64_t row_count = 0;         // data rows seen (header excluded)
  std::int64_t parse_error_count = 0;
  std::vector<std::string> errors;    // messages with line numbers
};

WeblogParseResult parse_weblog_tsv(const std::filesystem::path& path);

struct SessionizeConfig {
  std::string dataset_id = "weblog";
  std::string dataset_version = "unversioned";
  double timeout_minutes = 30.0;
  int min_session_events = 2;  // candidate query rows per session
  int synth_serp_depth = 10;   // padded SERP depth for logged clicks
  std::uint64_t seed = 0;
  std::string config_hash;

  nlohmann::json to_json() const;
};

// Splits per-user record streams on inactivity gaps strictly greater than the
// timeout. Input order does not matter; records are sorted into a total
// deterministic order first.
std::pair<std::vector<Session>, LossManifest> sessionize(
    std::vector<RawLogRecord> records, const SessionizeConfig& cfg);

struct IngestResult {
  SessionCorpus corpus;
  std::vector<std::string> parse_errors;
};

IngestResult ingest_weblog_tsv(const std::filesystem::path& path,
                               const SessionizeConfig& cfg);

// query_id -> doc_id -> grade. Duplicate (query, doc) pairs: last one wins.
// Negative grades are preserved.
using Qrels = std::map<std::string, std::map<std::string, int>>;

Qrels parse_qrels(const std::filesystem::path& path);
void write_qrels(const Qrels& qrels, const std::filesystem::path& path);

// Collapses qrels to a doc_id -> grade map; a doc judged for several queries
// keeps its maximum grade.
std::map<std::string, int> flatten_qrels(const Qrels& qrels);

// Plain synthetic log: rank-propensity clicks, no relevance grounding.
struct SynthSpec {
  int n_sessions = 100;
  int serp_depth = 10;
  int vocab_docs = 1000;
  int vocab_terms = 500;
  int min_queries = 1;
  int max_queries = 3;
  std::vector<double> click_propensity;  // per rank; empty = 0.3/rank
  double dwell_mu = 9.6;                 // log-ms
  double dwell_sigma = 0.75;
  double user_hash_fraction = 1.0;
  std::string dataset_id = "synth";
  std::int64_t base_ts_ms = 1700000000000;

  nlohmann::json to_json() const;
};

SessionCorpus generate_synthetic_log(const SynthSpec& spec, std::uint64_t seed);

SynthSpec synth_spec_from_json(const nlohmann::json& j);

// Relevance-grounded synthetic log paired with qrels: sessions search a
// planted query pool, SERPs come from a noisy ranker over graded docs, and
// clicks follow a position/attractiveness model over the true grades.
struct GradedSynthSpec {
  int n_sessions = 400;
  int n_queries = 100;
  int docs_per_query = 50;
  int serp_depth = 10;
  int min_positives = 2;
  int max_positives = 4;
  int max_grade = 2;
  double ranker_quality = 0.6;  // weight on true relevance in the logged SERP
  double attract_rel = 0.55;
  double attract_nonrel = 0.05;
  double dwell_mu = 9.6;
  double dwell_sigma = 0.75;
  int min_queries = 1;
  int max_queries = 3;
  std::string dataset_id = "synth-graded";
  std::int64_t base_ts_ms = 1700000000000;

  nlohmann::json to_json() const;
};

struct GradedSynthResult {
  SessionCorpus corpus;
  Qrels qrels;
};

GradedSynthResult generate_graded_log(const GradedSynthSpec& spec,
                                      std::uint64_t seed);

GradedSynthSpec graded_synth_spec_from_json(const nlohmann::json& j);

}  // namespace simeval
