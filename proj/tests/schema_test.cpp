#include "simeval/schema.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "simeval/rng.hpp"

using namespace simeval;
using nlohmann::json;

namespace {

Session full_session() {
  Session s;
  s.session_id = "u1-s0";
  s.dataset_id = "demo";
  s.user_hash = "abcd1234abcd1234";
  s.label = SessionLabel::Real;
  Event q;
  q.type = EventType::Query;
  q.ts_ms = 1000;
  q.query_id = "q1";
  q.payload = QueryPayload{"red shoes"};
  s.events.push_back(q);
  SerpPayload serp;
  serp.results = {{"d1", 1}, {"d2", 2}, {"d3", 3}};
  Event sv;
  sv.type = EventType::SerpView;
  sv.ts_ms = 1100;
  sv.query_id = "q1";
  sv.payload = serp;
  s.events.push_back(sv);
  Event c;
  c.type = EventType::Click;
  c.ts_ms = 1500;
  c.query_id = "q1";
  c.payload = ClickPayload{"d2", 2};
  s.events.push_back(c);
  Event d;
  d.type = EventType::Dwell;
  d.ts_ms = 1600;
  d.query_id = "q1";
  d.payload = DwellPayload{"d2", 4200};
  s.events.push_back(d);
  Event cu;
  cu.type = EventType::ConvUser;
  cu.ts_ms = 1700;
  cu.payload = ConvPayload{"cheaper ones please"};
  s.events.push_back(cu);
  Event cs;
  cs.type = EventType::ConvSystem;
  cs.ts_ms = 1800;
  cs.payload = ConvPayload{"here are some options"};
  s.events.push_back(cs);
  return s;
}

bool has_violation(const std::vector<Violation>& vs, ViolationCode c) {
  return std::any_of(vs.begin(), vs.end(),
                     [c](const Violation& v) { return v.code == c; });
}

}  // namespace

TEST_CASE("event type codes and names are stable") {
  static_assert(static_cast<int>(EventType::Query) == 0);
  static_assert(static_cast<int>(EventType::SerpView) == 1);
  static_assert(static_cast<int>(EventType::Click) == 2);
  static_assert(static_cast<int>(EventType::Dwell) == 3);
  static_assert(static_cast<int>(EventType::ConvUser) == 4);
  static_assert(static_cast<int>(EventType::ConvSystem) == 5);
  static_assert(kEventTypeCount == 6);

  const Session s = full_session();
  const json j = session_to_json(s);
  CHECK(j.at("events")[0].at("type") == "QUERY");
  CHECK(j.at("events")[1].at("type") == "SERP_VIEW");
  CHECK(j.at("events")[2].at("type") == "CLICK");
  CHECK(j.at("events")[3].at("type") == "DWELL");
  CHECK(j.at("events")[4].at("type") == "CONV_USER");
  CHECK(j.at("events")[5].at("type") == "CONV_SYSTEM");
  for (const char* name : {"QUERY", "SERP_VIEW", "CLICK", "DWELL", "CONV_USER",
                           "CONV_SYSTEM"}) {
    auto t = event_type_from_string(name);
    REQUIRE(t.has_value());
    CHECK(to_string(*t) == std::string(name));
  }
  CHECK_FALSE(event_type_from_string("HOVER").has_value());
}

TEST_CASE("canonical key set and absent optionals") {
  Session s = full_session();
  s.user_hash.reset();
  const json j = session_to_json(s);
  std::set<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.insert(k);
  CHECK(keys == std::set<std::string>{"schema_version", "session_id",
                                      "dataset_id", "label", "events"});
  CHECK(j.at("label") == "REAL");
  // absent optional fields are omitted, never serialized as null
  CHECK_FALSE(j.contains("user_hash"));
  CHECK_FALSE(j.contains("simulator_id"));
  for (const json& e : j.at("events")) {
    for (const auto& [k, v] : e.items()) CHECK_FALSE(v.is_null());
  }
  // payload fields are flattened into the event object
  const json& je = j.at("events");
  CHECK(je[0].at("query_text") == "red shoes");
  CHECK(je[0].at("query_id") == "q1");
  CHECK(je[1].at("results")[0] == json{{"doc_id", "d1"}, {"rank", 1}});
  CHECK(je[1].at("results").size() == 3);
  CHECK(je[2].at("doc_id") == "d2");
  CHECK(je[2].at("rank") == 2);
  CHECK(je[3].at("doc_id") == "d2");
  CHECK(je[3].at("dwell_ms") == 4200);
  CHECK(je[4].at("text") == "cheaper ones please");
  CHECK_FALSE(je[4].contains("query_id"));
  CHECK_FALSE(je[0].contains("payload"));
}

TEST_CASE("simulated label carries simulator_id") {
  Session s = full_session();
  s.label = SessionLabel::Simulated;
  s.simulator_id = "pbm";
  const json j = session_to_json(s);
  CHECK(j.at("label") == "SIMULATED");
  CHECK(j.at("simulator_id") == "pbm");
  CHECK(session_from_json(j) == s);
}

TEST_CASE("json round trip preserves the session exactly") {
  const Session s = full_session();
  CHECK(session_from_json(session_to_json(s)) == s);
}

TEST_CASE("from_json rejects malformed input") {
  json j = session_to_json(full_session());
  json bad = j;
  bad.erase("session_id");
  CHECK_THROWS_AS(session_from_json(bad), Error);
  bad = j;
  bad["label"] = "REALISH";
  CHECK_THROWS_AS(session_from_json(bad), Error);
  bad = j;
  bad["user_hash"] = nullptr;  // null is not a valid way to express absence
  CHECK_THROWS_AS(session_from_json(bad), Error);
  bad = j;
  bad["events"][0]["type"] = 17;
  CHECK_THROWS_AS(session_from_json(bad), Error);
  bad = j;
  bad["events"][0]["ts_ms"] = "noon";
  CHECK_THROWS_AS(session_from_json(bad), Error);
}

TEST_CASE("validator flags structural problems") {
  const Session good = full_session();
  CHECK(validate_session(good).empty());

  SUBCASE("empty session") {
    Session s = good;
    s.events.clear();
    CHECK(has_violation(validate_session(s), ViolationCode::EmptySession));
  }
  SUBCASE("non-monotone timestamps") {
    Session s = good;
    s.events[2].ts_ms = 900;
    CHECK(has_violation(validate_session(s), ViolationCode::NonMonotoneTs));
  }
  SUBCASE("empty query text") {
    Session s = good;
    s.events[0].payload = QueryPayload{""};
    CHECK(has_violation(validate_session(s), ViolationCode::EmptyRequiredField));
  }
  SUBCASE("serp rank gap") {
    Session s = good;
    SerpPayload p;
    p.results = {{"d1", 1}, {"d2", 3}};
    s.events[1].payload = p;
    CHECK(has_violation(validate_session(s),
                        ViolationCode::SerpRanksNotContiguous));
  }
  SUBCASE("serp rank below one") {
    Session s = good;
    SerpPayload p;
    p.results = {{"d1", 0}, {"d2", 1}};
    s.events[1].payload = p;
    CHECK(has_violation(validate_session(s), ViolationCode::RankOutOfRange));
  }
  SUBCASE("serp duplicate doc") {
    Session s = good;
    SerpPayload p;
    p.results = {{"d1", 1}, {"d1", 2}};
    s.events[1].payload = p;
    CHECK(has_violation(validate_session(s), ViolationCode::SerpDuplicateDoc));
  }
  SUBCASE("click without serp") {
    Session s = good;
    s.events.erase(s.events.begin() + 1);
    CHECK(has_violation(validate_session(s), ViolationCode::ClickWithoutSerp));
  }
  SUBCASE("click rank beyond serp") {
    Session s = good;
    s.events[2].payload = ClickPayload{"d9", 9};
    CHECK(has_violation(validate_session(s),
                        ViolationCode::ClickRankOutOfBounds));
  }
  SUBCASE("click doc mismatch") {
    Session s = good;
    s.events[2].payload = ClickPayload{"d1", 2};
    CHECK(has_violation(validate_session(s), ViolationCode::ClickDocMismatch));
  }
  SUBCASE("negative dwell") {
    Session s = good;
    s.events[3].payload = DwellPayload{"d2", -5};
    CHECK(has_violation(validate_session(s), ViolationCode::NegativeDwell));
  }
  SUBCASE("dwell on unclicked doc") {
    Session s = good;
    s.events[3].payload = DwellPayload{"d1", 100};
    CHECK(has_violation(validate_session(s), ViolationCode::OrphanDwell));
  }
  SUBCASE("label and simulator id must agree") {
    Session s = good;
    s.simulator_id = "pbm";
    CHECK(has_violation(validate_session(s),
                        ViolationCode::LabelSimulatorMismatch));
    Session t = good;
    t.label = SessionLabel::Simulated;
    CHECK(has_violation(validate_session(t),
                        ViolationCode::LabelSimulatorMismatch));
  }
  SUBCASE("empty ids") {
    Session s = good;
    s.session_id.clear();
    CHECK(has_violation(validate_session(s), ViolationCode::EmptyRequiredField));
  }
}

TEST_CASE("validator is total over fuzzed sessions") {
  RngStream rng(2024);
  for (int it = 0; it < 300; ++it) {
    Session s;
    if (rng.bernoulli(0.9)) s.session_id = "s" + std::to_string(it);
    if (rng.bernoulli(0.9)) s.dataset_id = "d";
    if (rng.bernoulli(0.3)) s.user_hash = "h";
    s.label = rng.bernoulli(0.5) ? SessionLabel::Real : SessionLabel::Simulated;
    if (rng.bernoulli(0.5)) s.simulator_id = "x";
    const int n = static_cast<int>(rng.uniform_int(8));
    std::int64_t ts = 0;
    for (int i = 0; i < n; ++i) {
      Event e;
      e.type = static_cast<EventType>(rng.uniform_int(6));
      ts += static_cast<std::int64_t>(rng.uniform_int(2000)) - 200;
      e.ts_ms = ts;
      if (rng.bernoulli(0.5)) e.query_id = "q" + std::to_string(rng.uniform_int(3));
      switch (rng.uniform_int(5)) {
        case 0:
          e.payload = QueryPayload{rng.bernoulli(0.8) ? "terms" : ""};
          break;
        case 1: {
          SerpPayload p;
          const int k = static_cast<int>(rng.uniform_int(4));
          for (int r = 0; r < k; ++r)
            p.results.push_back(
                {"d" + std::to_string(rng.uniform_int(4)),
                 static_cast<int>(rng.uniform_int(5))});
          e.payload = p;
          break;
        }
        case 2:
          e.payload = ClickPayload{"d" + std::to_string(rng.uniform_int(4)),
                                   static_cast<int>(rng.uniform_int(5))};
          break;
        case 3:
          e.payload = DwellPayload{"d" + std::to_string(rng.uniform_int(4)),
                                   static_cast<std::int64_t>(rng.uniform_int(5000)) - 500};
          break;
        default:
          e.payload = ConvPayload{"hi"};
      }
      s.events.push_back(e);
    }
    CHECK_NOTHROW(validate_session(s));
  }
}

TEST_CASE("schema version gate") {
  Session s = full_session();
  json j = session_to_json(s);
  j["schema_version"] = "2.0";

  const auto dir = std::filesystem::temp_directory_path() / "simeval_schema_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "future.jsonl";
  {
    std::ofstream out(path);
    out << j.dump() << "\n";
  }
  CHECK_THROWS_AS(read_jsonl(path, ReadMode::Strict), Error);
  // a major bump is a hard stop even in lenient mode
  CHECK_THROWS_AS(read_jsonl(path, ReadMode::Lenient), Error);
  try {
    read_jsonl(path, ReadMode::Lenient);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SchemaVersionUnsupported);
  }

  // minor version drift within the major is fine
  j["schema_version"] = "1.7";
  {
    std::ofstream out(path);
    out << j.dump() << "\n";
  }
  CHECK(read_jsonl(path, ReadMode::Strict).sessions.size() == 1);
}

TEST_CASE("jsonl reader accounting") {
  const auto dir = std::filesystem::temp_directory_path() / "simeval_schema_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "mixed.jsonl";

  Session good = full_session();
  Session bad = full_session();
  bad.session_id = "u1-s1";
  bad.events[2].ts_ms = 1;  // non-monotone
  {
    std::ofstream out(path);
    out << session_to_json(good).dump() << "\n";
    out << "{not json\n";
    out << session_to_json(bad).dump() << "\n";
    out << "\n";  // blank lines are skipped, not counted
    out << session_to_json(good).dump() << "\n";  // duplicate session_id
  }

  const SessionCorpus c = read_jsonl(path, ReadMode::Lenient);
  CHECK(c.sessions.size() == 1);
  const LossManifest& m = c.manifest;
  CHECK(m.input_record_count == 4);
  CHECK(m.emitted_record_count == 1);
  CHECK(m.dropped_records_by_reason.at(kDropParseError) == 1);
  CHECK(m.dropped_records_by_reason.at(kDropValidationFailed) == 2);
  CHECK(m.input_record_count ==
        m.emitted_record_count + m.dropped_records_by_reason.at(kDropParseError) +
            m.dropped_records_by_reason.at(kDropValidationFailed) +
            m.dropped_records_by_reason.at(kDropBelowMinLength));
  CHECK(m.dataset_id == "demo");

  CHECK_THROWS_AS(read_jsonl(path, ReadMode::Strict), Error);
  try {
    read_jsonl(path, ReadMode::Strict);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Parse);
    CHECK(e.message().find("line 2") != std::string::npos);
  }
}

TEST_CASE("write then read round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "simeval_schema_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "rt.jsonl";

  SessionCorpus corpus;
  Session a = full_session();
  Session b = full_session();
  b.session_id = "u1-s1";
  b.user_hash.reset();
  corpus.sessions = {a, b};
  corpus.manifest.dataset_id = "demo";
  write_jsonl(corpus, path);

  const SessionCorpus back = read_jsonl(path, ReadMode::Strict);
  REQUIRE(back.sessions.size() == 2);
  CHECK(back.sessions[0] == a);
  CHECK(back.sessions[1] == b);
  CHECK(back.manifest.missingness.at("user_hash") == doctest::Approx(0.5));
}

TEST_CASE("missingness measures absent optionals") {
  Session a = full_session();
  Session b = full_session();
  b.session_id = "x";
  b.user_hash.reset();
  for (Event& e : b.events) e.query_id.reset();
  const auto m = compute_missingness({a, b});
  CHECK(m.at("user_hash") == doctest::Approx(0.5));
  // a has 4 of 6 events carrying query_id, b none: 8 of 12 absent
  CHECK(m.at("query_id") == doctest::Approx(8.0 / 12.0));
}

TEST_CASE("manifest serialization carries the required fields") {
  LossManifest m;
  m.dataset_id = "demo";
  m.dataset_version = "v1";
  m.config_hash = "deadbeef";
  m.seed = 7;
  m.input_record_count = 10;
  m.candidate_session_count = 4;
  m.emitted_session_count = 3;
  m.emitted_event_count = 30;
  m.emitted_record_count = 8;
  m.dropped_sessions_by_reason[kDropBelowMinLength] = 1;
  m.dropped_records_by_reason[kDropBelowMinLength] = 2;
  m.missingness["user_hash"] = 0.25;
  m.sessionization_timeout_minutes = 30.0;
  m.sessionization_min_events = 2;
  m.timestamp_quantization_ms = 1000;
  m.synthetic_serp = true;

  const json j = m.to_json();
  for (const char* key :
       {"dataset_id", "dataset_version", "schema_version", "config_hash",
        "seed", "input_record_count", "emitted_session_count",
        "emitted_event_count", "dropped_sessions_by_reason", "dropped_fields",
        "missingness", "sessionization"})
    CHECK(j.contains(key));
  for (const char* reason :
       {kDropBelowMinLength, kDropValidationFailed, kDropParseError}) {
    CHECK(j.at("dropped_sessions_by_reason").contains(reason));
    CHECK(j.at("dropped_records_by_reason").contains(reason));
  }
  CHECK(j.at("sessionization").at("timeout_minutes").get<double>() == 30.0);
  CHECK(j.at("sessionization").at("min_session_events").get<int>() == 2);

  const LossManifest back = LossManifest::from_json(j);
  CHECK(back.to_json() == j);
  CHECK(back.dropped_total() == m.dropped_total());
}
