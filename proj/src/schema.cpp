#include "simeval/schema.hpp"

#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace simeval {

using nlohmann::json;

const char* to_string(EventType t) {
  switch (t) {
    case EventType::Query: return "QUERY";
    case EventType::SerpView: return "SERP_VIEW";
    case EventType::Click: return "CLICK";
    case EventType::Dwell: return "DWELL";
    case EventType::ConvUser: return "CONV_USER";
    case EventType::ConvSystem: return "CONV_SYSTEM";
  }
  return "UNKNOWN";
}

std::optional<EventType> event_type_from_string(std::string_view s) {
  if (s == "QUERY") return EventType::Query;
  if (s == "SERP_VIEW") return EventType::SerpView;
  if (s == "CLICK") return EventType::Click;
  if (s == "DWELL") return EventType::Dwell;
  if (s == "CONV_USER") return EventType::ConvUser;
  if (s == "CONV_SYSTEM") return EventType::ConvSystem;
  return std::nullopt;
}

const char* to_string(SessionLabel l) {
  return l == SessionLabel::Real ? "REAL" : "SIMULATED";
}

const char* to_string(ViolationCode c) {
  switch (c) {
    case ViolationCode::EmptySession: return "EMPTY_SESSION";
    case ViolationCode::NonMonotoneTs: return "NON_MONOTONE_TS";
    case ViolationCode::PayloadTypeMismatch: return "PAYLOAD_TYPE_MISMATCH";
    case ViolationCode::RankOutOfRange: return "RANK_OUT_OF_RANGE";
    case ViolationCode::SerpRanksNotContiguous: return "SERP_RANKS_NOT_CONTIGUOUS";
    case ViolationCode::SerpDuplicateDoc: return "SERP_DUPLICATE_DOC";
    case ViolationCode::NegativeDwell: return "NEGATIVE_DWELL";
    case ViolationCode::ClickWithoutSerp: return "CLICK_WITHOUT_SERP";
    case ViolationCode::ClickRankOutOfBounds: return "CLICK_RANK_OUT_OF_BOUNDS";
    case ViolationCode::ClickDocMismatch: return "CLICK_DOC_MISMATCH";
    case ViolationCode::OrphanDwell: return "ORPHAN_DWELL";
    case ViolationCode::LabelSimulatorMismatch: return "LABEL_SIMULATOR_MISMATCH";
    case ViolationCode::EmptyRequiredField: return "EMPTY_REQUIRED_FIELD";
    case ViolationCode::DuplicateSessionId: return "DUPLICATE_SESSION_ID";
  }
  return "UNKNOWN";
}

namespace {

constexpr std::size_t payload_index_for(EventType t) {
  switch (t) {
    case EventType::Query: return 0;
    case EventType::SerpView: return 1;
    case EventType::Click: return 2;
    case EventType::Dwell: return 3;
    case EventType::ConvUser:
    case EventType::ConvSystem: return 4;
  }
  return 0;
}

struct SerpState {
  // doc_id by rank, 1-based; empty string marks an unseen rank.
  std::vector<std::string> doc_at_rank;
};

}  // namespace

std::vector<Violation> validate_session(const Session& s) {
  std::vector<Violation> out;
  auto add = [&out](ViolationCode code, int idx, std::string detail) {
    out.push_back(Violation{code, idx, std::move(detail)});
  };

  if (s.session_id.empty())
    add(ViolationCode::EmptyRequiredField, -1, "session_id is empty");
  if (s.dataset_id.empty())
    add(ViolationCode::EmptyRequiredField, -1, "dataset_id is empty");

  const bool has_sim = s.simulator_id.has_value() && !s.simulator_id->empty();
  if (s.label == SessionLabel::Simulated && !has_sim)
    add(ViolationCode::LabelSimulatorMismatch, -1,
        "label SIMULATED without simulator_id");
  if (s.label == SessionLabel::Real && has_sim)
    add(ViolationCode::LabelSimulatorMismatch, -1,
        "label REAL with simulator_id set");

  if (s.events.empty()) {
    add(ViolationCode::EmptySession, -1, "session has no events");
    return out;
  }

  std::int64_t last_ts = s.events.front().ts_ms;
  // Most recent SERP overall and per query_id; clicks attach to the SERP for
  // their query_id when present, otherwise to the latest SERP seen.
  std::unordered_map<std::string, SerpState> serp_by_query;
  SerpState last_serp;
  bool has_last_serp = false;
  std::unordered_set<std::string> clicked_docs;

  for (int i = 0; i < static_cast<int>(s.events.size()); ++i) {
    const Event& e = s.events[i];

    if (e.ts_ms < last_ts)
      add(ViolationCode::NonMonotoneTs, i, "ts_ms decreases");
    last_ts = std::max(last_ts, e.ts_ms);

    if (e.payload.index() != payload_index_for(e.type)) {
      add(ViolationCode::PayloadTypeMismatch, i,
          std::string("payload does not match type ") + to_string(e.type));
      continue;
    }

    switch (e.type) {
      case EventType::Query: {
        if (e.query()->query_text.empty())
          add(ViolationCode::EmptyRequiredField, i, "query_text is empty");
        break;
      }
      case EventType::SerpView: {
        const auto& results = e.serp()->results;
        const int n = static_cast<int>(results.size());
        SerpState state;
        state.doc_at_rank.assign(results.size() + 1, std::string());
        std::unordered_set<std::string> docs;
        bool contiguous = true;
        for (const SerpResult& r : results) {
          if (r.doc_id.empty())
            add(ViolationCode::EmptyRequiredField, i, "result doc_id is empty");
          if (!docs.insert(r.doc_id).second)
            add(ViolationCode::SerpDuplicateDoc, i, "doc_id " + r.doc_id);
          if (r.rank < 1) {
            add(ViolationCode::RankOutOfRange, i,
                "result rank " + std::to_string(r.rank));
            contiguous = false;
          } else if (r.rank > n || !state.doc_at_rank[r.rank].empty()) {
            contiguous = false;
          } else {
            state.doc_at_rank[r.rank] = r.doc_id;
          }
        }
        for (int r = 1; r <= n; ++r)
          if (state.doc_at_rank[r].empty()) contiguous = false;
        if (!contiguous)
          add(ViolationCode::SerpRanksNotContiguous, i,
              "ranks are not 1..n exactly once");
        if (e.query_id) serp_by_query[*e.query_id] = state;
        last_serp = std::move(state);
        has_last_serp = true;
        break;
      }
      case EventType::Click: {
        const auto* c = e.click();
        if (c->doc_id.empty())
          add(ViolationCode::EmptyRequiredField, i, "click doc_id is empty");
        if (c->rank < 1) {
          add(ViolationCode::RankOutOfRange, i,
              "click rank " + std::to_string(c->rank));
          clicked_docs.insert(c->doc_id);
          break;
        }
        const SerpState* serp = nullptr;
        if (e.query_id) {
          auto it = serp_by_query.find(*e.query_id);
          if (it != serp_by_query.end()) serp = &it->second;
        } else if (has_last_serp) {
          serp = &last_serp;
        }
        if (serp == nullptr) {
          add(ViolationCode::ClickWithoutSerp, i, "no preceding SERP_VIEW");
        } else if (c->rank >= static_cast<int>(serp->doc_at_rank.size())) {
          add(ViolationCode::ClickRankOutOfBounds, i,
              "rank " + std::to_string(c->rank) + " on SERP of size " +
                  std::to_string(serp->doc_at_rank.size() - 1));
        } else if (!serp->doc_at_rank[c->rank].empty() &&
                   serp->doc_at_rank[c->rank] != c->doc_id) {
          add(ViolationCode::ClickDocMismatch, i,
              "doc " + c->doc_id + " != SERP doc at rank " +
                  std::to_string(c->rank));
        }
        clicked_docs.insert(c->doc_id);
        break;
      }
      case EventType::Dwell: {
        const auto* d = e.dwell();
        if (d->dwell_ms < 0)
          add(ViolationCode::NegativeDwell, i,
              "dwell_ms " + std::to_string(d->dwell_ms));
        if (!clicked_docs.count(d->doc_id))
          add(ViolationCode::OrphanDwell, i,
              "dwell on unclicked doc " + d->doc_id);
        break;
      }
      case EventType::ConvUser:
      case EventType::ConvSystem:
        break;
    }
  }
  return out;
}

std::map<std::string, double> compute_missingness(
    const std::vector<Session>& sessions) {
  std::int64_t n_sessions = static_cast<std::int64_t>(sessions.size());
  std::int64_t n_events = 0, missing_user = 0, missing_qid = 0;
  for (const Session& s : sessions) {
    if (!s.user_hash) ++missing_user;
    for (const Event& e : s.events) {
      ++n_events;
      if (!e.query_id) ++missing_qid;
    }
  }
  std::map<std::string, double> m;
  m["user_hash"] =
      n_sessions ? static_cast<double>(missing_user) / n_sessions : 0.0;
  m["query_id"] = n_events ? static_cast<double>(missing_qid) / n_events : 0.0;
  return m;
}

std::int64_t LossManifest::dropped_total() const {
  std::int64_t t = 0;
  for (const auto& [k, v] : dropped_sessions_by_reason) t += v;
  return t;
}

json LossManifest::to_json() const {
  json j;
  j["dataset_id"] = dataset_id;
  j["dataset_version"] = dataset_version;
  j["schema_version"] = schema_version;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["input_record_count"] = input_record_count;
  j["candidate_session_count"] = candidate_session_count;
  j["emitted_session_count"] = emitted_session_count;
  j["emitted_event_count"] = emitted_event_count;
  auto reason_map = [](const std::map<std::string, std::int64_t>& src) {
    json d = json::object();
    d[kDropBelowMinLength] = 0;
    d[kDropValidationFailed] = 0;
    d[kDropParseError] = 0;
    for (const auto& [k, v] : src) d[k] = v;
    return d;
  };
  j["dropped_sessions_by_reason"] = reason_map(dropped_sessions_by_reason);
  j["dropped_records_by_reason"] = reason_map(dropped_records_by_reason);
  j["emitted_record_count"] = emitted_record_count;
  j["dropped_fields"] = dropped_fields;
  j["missingness"] = missingness;
  j["sessionization"] = {{"timeout_minutes", sessionization_timeout_minutes},
                         {"min_session_events", sessionization_min_events}};
  j["timestamp_quantization_ms"] = timestamp_quantization_ms;
  j["synthetic_serp"] = synthetic_serp;
  if (!generator.is_null()) j["generator"] = generator;
  return j;
}

LossManifest LossManifest::from_json(const json& j) {
  LossManifest m;
  m.dataset_id = j.value("dataset_id", "");
  m.dataset_version = j.value("dataset_version", "unversioned");
  m.schema_version = j.value("schema_version", kSchemaVersion);
  m.config_hash = j.value("config_hash", "");
  m.seed = j.value("seed", std::uint64_t{0});
  m.input_record_count = j.value("input_record_count", std::int64_t{0});
  m.candidate_session_count = j.value("candidate_session_count", std::int64_t{0});
  m.emitted_session_count = j.value("emitted_session_count", std::int64_t{0});
  m.emitted_event_count = j.value("emitted_event_count", std::int64_t{0});
  if (j.contains("dropped_sessions_by_reason"))
    for (const auto& [k, v] : j.at("dropped_sessions_by_reason").items())
      m.dropped_sessions_by_reason[k] = v.get<std::int64_t>();
  if (j.contains("dropped_records_by_reason"))
    for (const auto& [k, v] : j.at("dropped_records_by_reason").items())
      m.dropped_records_by_reason[k] = v.get<std::int64_t>();
  m.emitted_record_count = j.value("emitted_record_count", std::int64_t{0});
  if (j.contains("dropped_fields"))
    m.dropped_fields = j.at("dropped_fields").get<std::vector<std::string>>();
  if (j.contains("missingness"))
    for (const auto& [k, v] : j.at("missingness").items())
      m.missingness[k] = v.get<double>();
  if (j.contains("sessionization")) {
    const json& s = j.at("sessionization");
    m.sessionization_timeout_minutes = s.value("timeout_minutes", 0.0);
    m.sessionization_min_events = s.value("min_session_events", 0);
  }
  m.timestamp_quantization_ms = j.value("timestamp_quantization_ms", std::int64_t{1});
  m.synthetic_serp = j.value("synthetic_serp", false);
  if (j.contains("generator")) m.generator = j.at("generator");
  return m;
}

json session_to_json(const Session& s) {
  json j;
  j["schema_version"] = s.schema_version;
  j["session_id"] = s.session_id;
  j["dataset_id"] = s.dataset_id;
  if (s.user_hash) j["user_hash"] = *s.user_hash;
  j["label"] = to_string(s.label);
  if (s.simulator_id) j["simulator_id"] = *s.simulator_id;
  json events = json::array();
  for (const Event& e : s.events) {
    json je;
    je["type"] = to_string(e.type);
    je["ts_ms"] = e.ts_ms;
    if (e.query_id) je["query_id"] = *e.query_id;
    switch (e.type) {
      case EventType::Query:
        je["query_text"] = e.query()->query_text;
        break;
      case EventType::SerpView: {
        json results = json::array();
        for (const SerpResult& r : e.serp()->results)
          results.push_back({{"doc_id", r.doc_id}, {"rank", r.rank}});
        je["results"] = results;
        break;
      }
      case EventType::Click:
        je["doc_id"] = e.click()->doc_id;
        je["rank"] = e.click()->rank;
        break;
      case EventType::Dwell:
        je["doc_id"] = e.dwell()->doc_id;
        je["dwell_ms"] = e.dwell()->dwell_ms;
        break;
      case EventType::ConvUser:
      case EventType::ConvSystem:
        je["text"] = e.conv()->text;
        break;
    }
    events.push_back(std::move(je));
  }
  j["events"] = std::move(events);
  return j;
}

namespace {

[[noreturn]] void parse_fail(const std::string& what) {
  throw Error(ErrorCode::Parse, what);
}

std::string need_string(const json& j, const char* key) {
  if (!j.contains(key)) parse_fail(std::string("missing key ") + key);
  const json& v = j.at(key);
  if (!v.is_string()) parse_fail(std::string(key) + " must be a string");
  return v.get<std::string>();
}

std::optional<std::string> opt_string(const json& j, const char* key) {
  if (!j.contains(key)) return std::nullopt;
  const json& v = j.at(key);
  if (!v.is_string())
    parse_fail(std::string(key) + " must be a string when present");
  return v.get<std::string>();
}

std::int64_t need_int(const json& j, const char* key) {
  if (!j.contains(key)) parse_fail(std::string("missing key ") + key);
  const json& v = j.at(key);
  if (v.is_number_integer() || v.is_number_unsigned())
    return v.get<std::int64_t>();
  if (v.is_number_float()) {
    double d = v.get<double>();
    if (d == static_cast<std::int64_t>(d)) return static_cast<std::int64_t>(d);
  }
  parse_fail(std::string(key) + " must be an integer");
}

}  // namespace

Session session_from_json(const json& j) {
  if (!j.is_object()) parse_fail("session must be a JSON object");
  Session s;
  s.schema_version = need_string(j, "schema_version");
  s.session_id = need_string(j, "session_id");
  s.dataset_id = need_string(j, "dataset_id");
  s.user_hash = opt_string(j, "user_hash");
  const std::string label = need_string(j, "label");
  if (label == "REAL")
    s.label = SessionLabel::Real;
  else if (label == "SIMULATED")
    s.label = SessionLabel::Simulated;
  else
    parse_fail("label must be REAL or SIMULATED, got " + label);
  s.simulator_id = opt_string(j, "simulator_id");
  if (!j.contains("events") || !j.at("events").is_array())
    parse_fail("events must be an array");
  for (const json& je : j.at("events")) {
    if (!je.is_object()) parse_fail("event must be a JSON object");
    Event e;
    const std::string type = need_string(je, "type");
    auto t = event_type_from_string(type);
    if (!t) parse_fail("unknown event type " + type);
    e.type = *t;
    e.ts_ms = need_int(je, "ts_ms");
    e.query_id = opt_string(je, "query_id");
    switch (e.type) {
      case EventType::Query:
        e.payload = QueryPayload{need_string(je, "query_text")};
        break;
      case EventType::SerpView: {
        if (!je.contains("results") || !je.at("results").is_array())
          parse_fail("SERP_VIEW requires a results array");
        SerpPayload p;
        for (const json& jr : je.at("results")) {
          if (!jr.is_object()) parse_fail("result must be a JSON object");
          p.results.push_back(SerpResult{
              need_string(jr, "doc_id"), static_cast<int>(need_int(jr, "rank"))});
        }
        e.payload = std::move(p);
        break;
      }
      case EventType::Click:
        e.payload = ClickPayload{need_string(je, "doc_id"),
                                 static_cast<int>(need_int(je, "rank"))};
        break;
      case EventType::Dwell:
        e.payload = DwellPayload{need_string(je, "doc_id"), need_int(je, "dwell_ms")};
        break;
      case EventType::ConvUser:
      case EventType::ConvSystem:
        e.payload = ConvPayload{need_string(je, "text")};
        break;
    }
    s.events.push_back(std::move(e));
  }
  return s;
}

namespace {

int schema_major_of(const std::string& version) {
  std::size_t dot = version.find('.');
  if (dot == std::string::npos || dot == 0) return -1;
  try {
    return std::stoi(version.substr(0, dot));
  } catch (...) {
    return -1;
  }
}

}  // namespace

SessionCorpus read_jsonl(const std::filesystem::path& path, ReadMode mode) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());

  SessionCorpus corpus;
  LossManifest& m = corpus.manifest;
  m.dropped_sessions_by_reason[kDropBelowMinLength] = 0;
  m.dropped_sessions_by_reason[kDropValidationFailed] = 0;
  m.dropped_sessions_by_reason[kDropParseError] = 0;

  std::vector<std::string> problems;
  bool any_parse_error = false;
  std::unordered_set<std::string> seen_ids;

  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++m.input_record_count;

    Session s;
    try {
      s = session_from_json(json::parse(line));
    } catch (const json::exception& e) {
      any_parse_error = true;
      problems.push_back("line " + std::to_string(line_no) + ": " + e.what());
      ++m.dropped_sessions_by_reason[kDropParseError];
      continue;
    } catch (const Error& e) {
      any_parse_error = true;
      problems.push_back("line " + std::to_string(line_no) + ": " + e.message());
      ++m.dropped_sessions_by_reason[kDropParseError];
      continue;
    }

    if (schema_major_of(s.schema_version) != kSchemaMajor)
      throw Error(ErrorCode::SchemaVersionUnsupported,
                  "line " + std::to_string(line_no) + ": schema_version " +
                      s.schema_version + " (reader supports major " +
                      std::to_string(kSchemaMajor) + ")");

    std::vector<Violation> violations = validate_session(s);
    if (violations.empty() && !seen_ids.insert(s.session_id).second)
      violations.push_back(Violation{ViolationCode::DuplicateSessionId, -1,
                                     "duplicate session_id " + s.session_id});
    if (!violations.empty()) {
      std::ostringstream os;
      os << "line " << line_no << " (" << s.session_id << "):";
      for (const Violation& v : violations)
        os << " " << to_string(v.code) << "@" << v.event_index;
      problems.push_back(os.str());
      ++m.dropped_sessions_by_reason[kDropValidationFailed];
      continue;
    }

    m.emitted_event_count += static_cast<std::int64_t>(s.events.size());
    corpus.sessions.push_back(std::move(s));
  }

  if (mode == ReadMode::Strict && !problems.empty()) {
    std::ostringstream os;
    os << problems.size() << " bad line(s):";
    for (std::size_t i = 0; i < problems.size() && i < 20; ++i)
      os << "\n  " << problems[i];
    throw Error(any_parse_error ? ErrorCode::Parse : ErrorCode::Validation,
                os.str());
  }

  m.candidate_session_count = m.input_record_count;
  m.emitted_session_count = static_cast<std::int64_t>(corpus.sessions.size());
  // One line is one record here.
  m.emitted_record_count = m.emitted_session_count;
  m.dropped_records_by_reason = m.dropped_sessions_by_reason;
  if (!corpus.sessions.empty()) m.dataset_id = corpus.sessions.front().dataset_id;
  m.missingness = compute_missingness(corpus.sessions);
  return corpus;
}

void write_jsonl(const SessionCorpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  for (const Session& s : corpus.sessions) out << session_to_json(s).dump() << "\n";
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

void write_manifest(const LossManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << m.to_json().dump(2) << "\n";
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

LossManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, "manifest " + path.string() + ": " + e.what());
  }
  return LossManifest::from_json(j);
}

}  // namespace simeval
