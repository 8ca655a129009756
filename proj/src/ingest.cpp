#include "simeval/ingest.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "simeval/rng.hpp"

namespace simeval {

using nlohmann::json;

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorCode::Internal, "EVP_Digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

namespace {

void canonical_dump(const json& j, std::string& out) {
  switch (j.type()) {
    case json::value_t::object: {
      out.push_back('{');
      bool first = true;
      // nlohmann's default object storage is key-sorted already; iterate in
      // that order explicitly for clarity.
      for (auto it = j.cbegin(); it != j.cend(); ++it) {
        if (!first) out.push_back(',');
        first = false;
        out += json(it.key()).dump();
        out.push_back(':');
        canonical_dump(it.value(), out);
      }
      out.push_back('}');
      break;
    }
    case json::value_t::array: {
      out.push_back('[');
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out.push_back(',');
        canonical_dump(j[i], out);
      }
      out.push_back(']');
      break;
    }
    case json::value_t::number_float: {
      const double d = j.get<double>();
      if (!std::isfinite(d))
        throw Error(ErrorCode::Config, "non-finite number in config");
      // 7.0 and 7 must hash identically.
      if (d == std::floor(d) && std::abs(d) < 9.007199254740992e15) {
        out += json(static_cast<std::int64_t>(d)).dump();
      } else {
        out += j.dump();
      }
      break;
    }
    default:
      out += j.dump();
  }
}

}  // namespace

std::string canonical_json(const json& j) {
  std::string out;
  canonical_dump(j, out);
  return out;
}

std::string config_hash(const json& config) {
  return sha256_hex(canonical_json(config));
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r')
    out.back().pop_back();
  return out;
}

std::optional<std::int64_t> parse_log_time_ms(const std::string& s) {
  std::tm tm{};
  int y, mo, d, h, mi, se;
  if (std::sscanf(s.c_str(), "%d-%d-%d %d:%d:%d", &y, &mo, &d, &h, &mi, &se) != 6)
    return std::nullopt;
  tm.tm_year = y - 1900;
  tm.tm_mon = mo - 1;
  tm.tm_mday = d;
  tm.tm_hour = h;
  tm.tm_min = mi;
  tm.tm_sec = se;
  const std::time_t t = timegm(&tm);
  if (t == static_cast<std::time_t>(-1)) return std::nullopt;
  return static_cast<std::int64_t>(t) * 1000;
}

}  // namespace

WeblogParseResult parse_weblog_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());

  WeblogParseResult res;
  std::string line;
  std::int64_t line_no = 0;
  bool first = true;
  auto bad = [&res](std::int64_t n, const std::string& why) {
    ++res.parse_error_count;
    if (res.errors.size() < 100)
      res.errors.push_back("line " + std::to_string(n) + ": " + why);
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = split_tabs(line);
    if (first) {
      first = false;
      if (!fields.empty() && fields[0] == "AnonID") continue;  // header row
    }
    ++res.row_count;
    if (fields.size() < 3) {
      bad(line_no, "expected at least 3 tab-separated fields");
      continue;
    }
    RawLogRecord r;
    r.user_key = fields[0];
    r.query_text = fields[1];
    if (r.user_key.empty() || r.query_text.empty()) {
      bad(line_no, "empty AnonID or Query");
      continue;
    }
    auto ts = parse_log_time_ms(fields[2]);
    if (!ts) {
      bad(line_no, "bad QueryTime '" + fields[2] + "'");
      continue;
    }
    r.ts_ms = *ts;
    const std::string rank_s = fields.size() > 3 ? fields[3] : "";
    const std::string url_s = fields.size() > 4 ? fields[4] : "";
    if (rank_s.empty() != url_s.empty()) {
      bad(line_no, "ItemRank and ClickURL must be both present or both empty");
      continue;
    }
    if (!rank_s.empty()) {
      int rank = 0;
      try {
        std::size_t used = 0;
        rank = std::stoi(rank_s, &used);
        if (used != rank_s.size()) throw std::invalid_argument(rank_s);
      } catch (...) {
        bad(line_no, "bad ItemRank '" + rank_s + "'");
        continue;
      }
      if (rank < 1) {
        bad(line_no, "ItemRank " + std::to_string(rank) + " < 1");
        continue;
      }
      r.clicked_rank = rank;
      r.clicked_doc = url_s;
    }
    res.records.push_back(std::move(r));
  }
  return res;
}

json SessionizeConfig::to_json() const {
  return json{{"dataset_id", dataset_id},
              {"dataset_version", dataset_version},
              {"timeout_minutes", timeout_minutes},
              {"min_session_events", min_session_events},
              {"synth_serp_depth", synth_serp_depth},
              {"seed", seed}};
}

std::pair<std::vector<Session>, LossManifest> sessionize(
    std::vector<RawLogRecord> records, const SessionizeConfig& cfg) {
  if (cfg.timeout_minutes <= 0)
    throw Error(ErrorCode::Config, "timeout_minutes must be positive");
  if (cfg.min_session_events < 1)
    throw Error(ErrorCode::Config, "min_session_events must be >= 1");
  if (cfg.synth_serp_depth < 1)
    throw Error(ErrorCode::Config, "synth_serp_depth must be >= 1");

  // Total order on records so input shuffles cannot change the output.
  std::sort(records.begin(), records.end(),
            [](const RawLogRecord& a, const RawLogRecord& b) {
              if (a.user_key != b.user_key) return a.user_key < b.user_key;
              if (a.ts_ms != b.ts_ms) return a.ts_ms < b.ts_ms;
              if (a.query_text != b.query_text) return a.query_text < b.query_text;
              const int ra = a.clicked_rank.value_or(0);
              const int rb = b.clicked_rank.value_or(0);
              if (ra != rb) return ra < rb;
              return a.clicked_doc.value_or("") < b.clicked_doc.value_or("");
            });

  const std::int64_t timeout_ms =
      static_cast<std::int64_t>(std::llround(cfg.timeout_minutes * 60000.0));

  LossManifest m;
  m.dataset_id = cfg.dataset_id;
  m.dataset_version = cfg.dataset_version;
  m.config_hash = cfg.config_hash.empty() ? config_hash(cfg.to_json()) : cfg.config_hash;
  m.seed = cfg.seed;
  m.input_record_count = static_cast<std::int64_t>(records.size());
  m.sessionization_timeout_minutes = cfg.timeout_minutes;
  m.sessionization_min_events = cfg.min_session_events;
  m.timestamp_quantization_ms = 1000;  // source resolution is seconds
  m.dropped_sessions_by_reason = {{kDropBelowMinLength, 0},
                                  {kDropValidationFailed, 0},
                                  {kDropParseError, 0}};
  m.dropped_records_by_reason = {{kDropBelowMinLength, 0},
                                 {kDropValidationFailed, 0},
                                 {kDropParseError, 0}};

  std::vector<Session> sessions;

  auto flush = [&](std::size_t begin, std::size_t end, int ordinal) {
    ++m.candidate_session_count;
    const std::int64_t n_records = static_cast<std::int64_t>(end - begin);
    if (n_records < cfg.min_session_events) {
      ++m.dropped_sessions_by_reason[kDropBelowMinLength];
      m.dropped_records_by_reason[kDropBelowMinLength] += n_records;
      return;
    }
    const std::string uhash = sha256_hex(records[begin].user_key);
    Session s;
    s.schema_version = kSchemaVersion;
    s.dataset_id = cfg.dataset_id;
    s.user_hash = uhash.substr(0, 16);
    s.session_id = "u" + uhash.substr(0, 12) + "-s" + std::to_string(ordinal);
    s.label = SessionLabel::Real;
    for (std::size_t k = begin; k < end; ++k) {
      const RawLogRecord& r = records[k];
      const std::string qid = s.session_id + ":q" + std::to_string(k - begin);
      Event q;
      q.type = EventType::Query;
      q.ts_ms = r.ts_ms;
      q.query_id = qid;
      q.payload = QueryPayload{r.query_text};
      s.events.push_back(std::move(q));
      if (r.clicked_rank) {
        m.synthetic_serp = true;
        const int depth = std::max(*r.clicked_rank, cfg.synth_serp_depth);
        SerpPayload serp;
        for (int rank = 1; rank <= depth; ++rank) {
          std::string doc = rank == *r.clicked_rank
                                ? *r.clicked_doc
                                : kPadDocPrefix + std::to_string(rank);
          serp.results.push_back(SerpResult{std::move(doc), rank});
        }
        Event sv;
        sv.type = EventType::SerpView;
        sv.ts_ms = r.ts_ms;
        sv.query_id = qid;
        sv.payload = std::move(serp);
        s.events.push_back(std::move(sv));
        Event c;
        c.type = EventType::Click;
        c.ts_ms = r.ts_ms;
        c.query_id = qid;
        c.payload = ClickPayload{*r.clicked_doc, *r.clicked_rank};
        s.events.push_back(std::move(c));
      }
    }
    if (!validate_session(s).empty()) {
      ++m.dropped_sessions_by_reason[kDropValidationFailed];
      m.dropped_records_by_reason[kDropValidationFailed] += n_records;
      return;
    }
    m.emitted_event_count += static_cast<std::int64_t>(s.events.size());
    m.emitted_record_count += n_records;
    sessions.push_back(std::move(s));
  };

  std::size_t start = 0;
  int ordinal = 0;
  for (std::size_t i = 1; i <= records.size(); ++i) {
    const bool user_break =
        i == records.size() || records[i].user_key != records[start].user_key;
    const bool gap_break =
        !user_break && records[i].ts_ms - records[i - 1].ts_ms > timeout_ms;
    if (user_break || gap_break) {
      flush(start, i, ordinal);
      ordinal = user_break ? 0 : ordinal + 1;
      start = i;
    }
  }

  m.emitted_session_count = static_cast<std::int64_t>(sessions.size());
  m.missingness = compute_missingness(sessions);
  return {std::move(sessions), std::move(m)};
}

IngestResult ingest_weblog_tsv(const std::filesystem::path& path,
                               const SessionizeConfig& cfg) {
  WeblogParseResult parsed = parse_weblog_tsv(path);
  auto [sessions, manifest] = sessionize(std::move(parsed.records), cfg);
  manifest.input_record_count = parsed.row_count;
  manifest.dropped_records_by_reason[kDropParseError] = parsed.parse_error_count;
  IngestResult out;
  out.corpus.sessions = std::move(sessions);
  out.corpus.manifest = std::move(manifest);
  out.parse_errors = std::move(parsed.errors);
  return out;
}

Qrels parse_qrels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  Qrels qrels;
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream is(line);
    std::string qid, iter, doc, grade_s;
    if (!(is >> qid >> iter >> doc >> grade_s))
      throw Error(ErrorCode::Parse,
                  path.string() + " line " + std::to_string(line_no) +
                      ": expected 'qid iter doc grade'");
    int grade = 0;
    try {
      std::size_t used = 0;
      grade = std::stoi(grade_s, &used);
      if (used != grade_s.size()) throw std::invalid_argument(grade_s);
    } catch (...) {
      throw Error(ErrorCode::Parse,
                  path.string() + " line " + std::to_string(line_no) +
                      ": bad grade '" + grade_s + "'");
    }
    qrels[qid][doc] = grade;  // duplicates: last assignment wins
  }
  return qrels;
}

void write_qrels(const Qrels& qrels, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  for (const auto& [qid, docs] : qrels)
    for (const auto& [doc, grade] : docs)
      out << qid << " 0 " << doc << " " << grade << "\n";
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

std::map<std::string, int> flatten_qrels(const Qrels& qrels) {
  std::map<std::string, int> flat;
  for (const auto& [qid, docs] : qrels)
    for (const auto& [doc, grade] : docs) {
      auto it = flat.find(doc);
      if (it == flat.end())
        flat[doc] = grade;
      else
        it->second = std::max(it->second, grade);
    }
  return flat;
}

json SynthSpec::to_json() const {
  return json{{"type", "synth"},
              {"n_sessions", n_sessions},
              {"serp_depth", serp_depth},
              {"vocab_docs", vocab_docs},
              {"vocab_terms", vocab_terms},
              {"min_queries", min_queries},
              {"max_queries", max_queries},
              {"click_propensity", click_propensity},
              {"dwell_mu", dwell_mu},
              {"dwell_sigma", dwell_sigma},
              {"user_hash_fraction", user_hash_fraction},
              {"dataset_id", dataset_id},
              {"base_ts_ms", base_ts_ms}};
}

SynthSpec synth_spec_from_json(const json& j) {
  SynthSpec s;
  s.n_sessions = j.value("n_sessions", s.n_sessions);
  s.serp_depth = j.value("serp_depth", s.serp_depth);
  s.vocab_docs = j.value("vocab_docs", s.vocab_docs);
  s.vocab_terms = j.value("vocab_terms", s.vocab_terms);
  s.min_queries = j.value("min_queries", s.min_queries);
  s.max_queries = j.value("max_queries", s.max_queries);
  s.click_propensity = j.value("click_propensity", s.click_propensity);
  s.dwell_mu = j.value("dwell_mu", s.dwell_mu);
  s.dwell_sigma = j.value("dwell_sigma", s.dwell_sigma);
  s.user_hash_fraction = j.value("user_hash_fraction", s.user_hash_fraction);
  s.dataset_id = j.value("dataset_id", s.dataset_id);
  s.base_ts_ms = j.value("base_ts_ms", s.base_ts_ms);
  return s;
}

namespace {

void check_synth_common(int n_sessions, int serp_depth, int min_q, int max_q) {
  if (n_sessions < 0) throw Error(ErrorCode::InvalidArgument, "n_sessions < 0");
  if (serp_depth < 1) throw Error(ErrorCode::InvalidArgument, "serp_depth < 1");
  if (min_q < 1 || max_q < min_q)
    throw Error(ErrorCode::InvalidArgument, "bad query count range");
}

std::string zero_pad(int value, int width) {
  std::string s = std::to_string(value);
  if (static_cast<int>(s.size()) < width)
    s.insert(0, width - s.size(), '0');
  return s;
}

}  // namespace

SessionCorpus generate_synthetic_log(const SynthSpec& spec, std::uint64_t seed) {
  check_synth_common(spec.n_sessions, spec.serp_depth, spec.min_queries,
                     spec.max_queries);
  if (spec.vocab_docs < spec.serp_depth)
    throw Error(ErrorCode::InvalidArgument, "vocab_docs < serp_depth");
  for (double p : spec.click_propensity)
    if (p < 0.0 || p > 1.0)
      throw Error(ErrorCode::InvalidArgument, "click propensity outside [0,1]");
  if (spec.user_hash_fraction < 0.0 || spec.user_hash_fraction > 1.0)
    throw Error(ErrorCode::InvalidArgument, "user_hash_fraction outside [0,1]");

  auto propensity = [&spec](int rank) {
    if (spec.click_propensity.empty()) return 0.3 / rank;
    const std::size_t i =
        std::min<std::size_t>(rank - 1, spec.click_propensity.size() - 1);
    return spec.click_propensity[i];
  };

  SessionCorpus corpus;
  for (int i = 0; i < spec.n_sessions; ++i) {
    const std::string tag = std::to_string(i);
    RngStream rng = RngStream::from(seed, {"synth", tag});
    Session s;
    s.dataset_id = spec.dataset_id;
    s.session_id = spec.dataset_id + "-s" + zero_pad(i, 6);
    s.label = SessionLabel::Real;
    if (rng.bernoulli(spec.user_hash_fraction))
      s.user_hash = sha256_hex("user" + tag).substr(0, 16);

    std::int64_t ts = spec.base_ts_ms + static_cast<std::int64_t>(i) * 3600000;
    const int n_queries =
        spec.min_queries +
        static_cast<int>(rng.uniform_int(spec.max_queries - spec.min_queries + 1));
    for (int qk = 0; qk < n_queries; ++qk) {
      const std::string qid = s.session_id + ":q" + std::to_string(qk);
      std::string text;
      const int n_terms = 2 + static_cast<int>(rng.uniform_int(3));
      for (int t = 0; t < n_terms; ++t) {
        if (t) text.push_back(' ');
        text += "t" + std::to_string(rng.uniform_int(spec.vocab_terms));
      }
      Event q;
      q.type = EventType::Query;
      q.ts_ms = ts;
      q.query_id = qid;
      q.payload = QueryPayload{std::move(text)};
      s.events.push_back(std::move(q));
      ts += 1000;

      SerpPayload serp;
      std::vector<std::string> docs;
      while (static_cast<int>(docs.size()) < spec.serp_depth) {
        std::string d = "d" + std::to_string(rng.uniform_int(spec.vocab_docs));
        if (std::find(docs.begin(), docs.end(), d) == docs.end())
          docs.push_back(std::move(d));
      }
      for (int r = 1; r <= spec.serp_depth; ++r)
        serp.results.push_back(SerpResult{docs[r - 1], r});
      Event sv;
      sv.type = EventType::SerpView;
      sv.ts_ms = ts;
      sv.query_id = qid;
      sv.payload = std::move(serp);
      s.events.push_back(std::move(sv));
      ts += 1000;

      for (int r = 1; r <= spec.serp_depth; ++r) {
        if (!rng.bernoulli(propensity(r))) continue;
        Event c;
        c.type = EventType::Click;
        c.ts_ms = ts;
        c.query_id = qid;
        c.payload = ClickPayload{docs[r - 1], r};
        s.events.push_back(std::move(c));
        ts += 1000;
        Event d;
        d.type = EventType::Dwell;
        d.ts_ms = ts;
        d.query_id = qid;
        d.payload = DwellPayload{
            docs[r - 1],
            std::max<std::int64_t>(
                0, std::llround(rng.lognormal(spec.dwell_mu, spec.dwell_sigma)))};
        s.events.push_back(std::move(d));
        ts += 1000;
      }
      ts += 30000;  // pause before the next query
    }
    corpus.manifest.emitted_event_count +=
        static_cast<std::int64_t>(s.events.size());
    corpus.manifest.emitted_record_count += n_queries;
    corpus.sessions.push_back(std::move(s));
  }

  LossManifest& m = corpus.manifest;
  m.dataset_id = spec.dataset_id;
  m.seed = seed;
  m.generator = spec.to_json();
  m.config_hash = config_hash(json{{"generator", spec.to_json()}, {"seed", seed}});
  m.input_record_count = m.emitted_record_count;
  m.candidate_session_count = spec.n_sessions;
  m.emitted_session_count = static_cast<std::int64_t>(corpus.sessions.size());
  m.dropped_sessions_by_reason = {{kDropBelowMinLength, 0},
                                  {kDropValidationFailed, 0},
                                  {kDropParseError, 0}};
  m.dropped_records_by_reason = m.dropped_sessions_by_reason;
  m.missingness = compute_missingness(corpus.sessions);
  return corpus;
}

json GradedSynthSpec::to_json() const {
  return json{{"type", "synth-graded"},
              {"n_sessions", n_sessions},
              {"n_queries", n_queries},
              {"docs_per_query", docs_per_query},
              {"serp_depth", serp_depth},
              {"min_positives", min_positives},
              {"max_positives", max_positives},
              {"max_grade", max_grade},
              {"ranker_quality", ranker_quality},
              {"attract_rel", attract_rel},
              {"attract_nonrel", attract_nonrel},
              {"dwell_mu", dwell_mu},
              {"dwell_sigma", dwell_sigma},
              {"min_queries", min_queries},
              {"max_queries", max_queries},
              {"dataset_id", dataset_id},
              {"base_ts_ms", base_ts_ms}};
}

GradedSynthSpec graded_synth_spec_from_json(const json& j) {
  GradedSynthSpec s;
  s.n_sessions = j.value("n_sessions", s.n_sessions);
  s.n_queries = j.value("n_queries", s.n_queries);
  s.docs_per_query = j.value("docs_per_query", s.docs_per_query);
  s.serp_depth = j.value("serp_depth", s.serp_depth);
  s.min_positives = j.value("min_positives", s.min_positives);
  s.max_positives = j.value("max_positives", s.max_positives);
  s.max_grade = j.value("max_grade", s.max_grade);
  s.ranker_quality = j.value("ranker_quality", s.ranker_quality);
  s.attract_rel = j.value("attract_rel", s.attract_rel);
  s.attract_nonrel = j.value("attract_nonrel", s.attract_nonrel);
  s.dwell_mu = j.value("dwell_mu", s.dwell_mu);
  s.dwell_sigma = j.value("dwell_sigma", s.dwell_sigma);
  s.min_queries = j.value("min_queries", s.min_queries);
  s.max_queries = j.value("max_queries", s.max_queries);
  s.dataset_id = j.value("dataset_id", s.dataset_id);
  s.base_ts_ms = j.value("base_ts_ms", s.base_ts_ms);
  return s;
}

GradedSynthResult generate_graded_log(const GradedSynthSpec& spec,
                                      std::uint64_t seed) {
  check_synth_common(spec.n_sessions, spec.serp_depth, spec.min_queries,
                     spec.max_queries);
  if (spec.n_queries < 1) throw Error(ErrorCode::InvalidArgument, "n_queries < 1");
  if (spec.docs_per_query < spec.serp_depth)
    throw Error(ErrorCode::InvalidArgument, "docs_per_query < serp_depth");
  if (spec.min_positives < 1 || spec.max_positives < spec.min_positives ||
      spec.max_positives > spec.docs_per_query)
    throw Error(ErrorCode::InvalidArgument, "bad positives range");
  if (spec.max_grade < 1) throw Error(ErrorCode::InvalidArgument, "max_grade < 1");
  if (spec.ranker_quality < 0.0 || spec.ranker_quality > 1.0)
    throw Error(ErrorCode::InvalidArgument, "ranker_quality outside [0,1]");

  GradedSynthResult out;

  std::vector<std::string> query_ids(spec.n_queries);
  for (int q = 0; q < spec.n_queries; ++q) {
    const std::string qid = "q" + zero_pad(q, 5);
    query_ids[q] = qid;
    RngStream rng = RngStream::from(seed, {"graded", "qrels", qid});
    std::vector<int> idx(spec.docs_per_query);
    for (int k = 0; k < spec.docs_per_query; ++k) idx[k] = k;
    rng.shuffle(idx);
    const int n_pos =
        spec.min_positives +
        static_cast<int>(rng.uniform_int(spec.max_positives - spec.min_positives + 1));
    for (int k = 0; k < n_pos; ++k) {
      const int grade = 1 + static_cast<int>(rng.uniform_int(spec.max_grade));
      out.qrels[qid][qid + "d" + zero_pad(idx[k], 3)] = grade;
    }
  }

  auto grade_of = [&out](const std::string& qid, const std::string& doc) {
    auto qit = out.qrels.find(qid);
    if (qit == out.qrels.end()) return 0;
    auto dit = qit->second.find(doc);
    return dit == qit->second.end() ? 0 : dit->second;
  };

  SessionCorpus& corpus = out.corpus;
  for (int i = 0; i < spec.n_sessions; ++i) {
    const std::string tag = std::to_string(i);
    RngStream rng = RngStream::from(seed, {"graded", "session", tag});
    Session s;
    s.dataset_id = spec.dataset_id;
    s.session_id = spec.dataset_id + "-s" + zero_pad(i, 6);
    s.label = SessionLabel::Real;
    s.user_hash = sha256_hex("guser" + tag).substr(0, 16);

    std::int64_t ts = spec.base_ts_ms + static_cast<std::int64_t>(i) * 3600000;
    const int n_q =
        spec.min_queries +
        static_cast<int>(rng.uniform_int(spec.max_queries - spec.min_queries + 1));
    for (int qk = 0; qk < n_q; ++qk) {
      const std::string& query = query_ids[rng.uniform_int(spec.n_queries)];
      const std::string qid = s.session_id + ":q" + std::to_string(qk);

      Event q;
      q.type = EventType::Query;
      q.ts_ms = ts;
      q.query_id = qid;
      q.payload = QueryPayload{"find " + query};
      s.events.push_back(std::move(q));
      ts += 1000;

      // Noisy logged ranker over the query's candidate docs.
      std::vector<std::pair<double, std::string>> scored;
      scored.reserve(spec.docs_per_query);
      for (int k = 0; k < spec.docs_per_query; ++k) {
        std::string doc = query + "d" + zero_pad(k, 3);
        const double rel01 =
            static_cast<double>(grade_of(query, doc)) / spec.max_grade;
        const double score =
            spec.ranker_quality * rel01 + (1.0 - spec.ranker_quality) * rng.normal();
        scored.emplace_back(score, std::move(doc));
      }
      std::sort(scored.begin(), scored.end(),
                [](const auto& a, const auto& b) {
                  if (a.first != b.first) return a.first > b.first;
                  return a.second < b.second;
                });

      SerpPayload serp;
      for (int r = 1; r <= spec.serp_depth; ++r)
        serp.results.push_back(SerpResult{scored[r - 1].second, r});
      Event sv;
      sv.type = EventType::SerpView;
      sv.ts_ms = ts;
      sv.query_id = qid;
      sv.payload = serp;
      s.events.push_back(std::move(sv));
      ts += 1000;

      for (int r = 1; r <= spec.serp_depth; ++r) {
        const std::string& doc = serp.results[r - 1].doc_id;
        const bool rel = grade_of(query, doc) > 0;
        const double p =
            (1.0 / r) * (rel ? spec.attract_rel : spec.attract_nonrel);
        if (!rng.bernoulli(p)) continue;
        Event c;
        c.type = EventType::Click;
        c.ts_ms = ts;
        c.query_id = qid;
        c.payload = ClickPayload{doc, r};
        s.events.push_back(std::move(c));
        ts += 1000;
        Event d;
        d.type = EventType::Dwell;
        d.ts_ms = ts;
        d.query_id = qid;
        d.payload = DwellPayload{
            doc, std::max<std::int64_t>(
                     0, std::llround(rng.lognormal(spec.dwell_mu, spec.dwell_sigma)))};
        s.events.push_back(std::move(d));
        ts += 1000;
      }
      ts += 30000;
    }
    corpus.manifest.emitted_event_count +=
        static_cast<std::int64_t>(s.events.size());
    corpus.manifest.emitted_record_count += n_q;
    corpus.sessions.push_back(std::move(s));
  }

  LossManifest& m = corpus.manifest;
  m.dataset_id = spec.dataset_id;
  m.seed = seed;
  m.generator = spec.to_json();
  m.config_hash = config_hash(json{{"generator", spec.to_json()}, {"seed", seed}});
  m.input_record_count = m.emitted_record_count;
  m.candidate_session_count = spec.n_sessions;
  m.emitted_session_count = static_cast<std::int64_t>(corpus.sessions.size());
  m.dropped_sessions_by_reason = {{kDropBelowMinLength, 0},
                                  {kDropValidationFailed, 0},
                                  {kDropParseError, 0}};
  m.dropped_records_by_reason = m.dropped_sessions_by_reason;
  m.missingness = compute_missingness(corpus.sessions);
  return out;
}

}  // namespace simeval
