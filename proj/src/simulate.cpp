#include "simeval/simulate.hpp"

#include <algorithm>
#include <cmath>

#include "simeval/ingest.hpp"

namespace simeval {

using nlohmann::json;

const char* to_string(SimulatorKind k) {
  switch (k) {
    case SimulatorKind::Pbm: return "pbm";
    case SimulatorKind::Dbn: return "dbn";
    case SimulatorKind::Heuristic: return "heuristic";
    case SimulatorKind::LlmSim: return "llm_sim";
  }
  return "unknown";
}

std::optional<SimulatorKind> simulator_kind_from_string(std::string_view s) {
  if (s == "pbm") return SimulatorKind::Pbm;
  if (s == "dbn") return SimulatorKind::Dbn;
  if (s == "heuristic") return SimulatorKind::Heuristic;
  if (s == "llm_sim") return SimulatorKind::LlmSim;
  return std::nullopt;
}

DwellModel fit_dwell_lognormal(const SessionCorpus& corpus) {
  std::vector<double> logs;
  for (const Session& s : corpus.sessions)
    for (const Event& e : s.events)
      if (const auto* d = e.dwell())
        if (d->dwell_ms > 0) logs.push_back(std::log(static_cast<double>(d->dwell_ms)));
  DwellModel m;
  if (logs.empty()) return m;
  double mu = 0;
  for (double v : logs) mu += v;
  mu /= logs.size();
  double var = 0;
  for (double v : logs) var += (v - mu) * (v - mu);
  var /= logs.size();
  m.mu = mu;
  m.sigma = std::sqrt(var);
  m.fitted = true;
  return m;
}

std::string SimulatorConfig::simulator_id() const { return to_string(kind); }

json SimulatorConfig::to_json() const {
  json j;
  j["kind"] = to_string(kind);
  j["seed"] = seed;
  j["rel_grade_threshold"] = rel_grade_threshold;
  j["dwell"] = {{"mu", dwell.mu}, {"sigma", dwell.sigma}, {"fitted", dwell.fitted}};
  switch (kind) {
    case SimulatorKind::Pbm:
      j["params"] = {{"attract_rel", pbm.attract_rel},
                     {"attract_nonrel", pbm.attract_nonrel},
                     {"examination_curve", pbm.examination_curve}};
      break;
    case SimulatorKind::Dbn:
      j["params"] = {{"attract_rel", dbn.attract_rel},
                     {"attract_nonrel", dbn.attract_nonrel},
                     {"satisfy_rel", dbn.satisfy_rel},
                     {"satisfy_nonrel", dbn.satisfy_nonrel},
                     {"continuation", dbn.continuation}};
      break;
    case SimulatorKind::Heuristic:
      j["params"] = {{"volume", heuristic.volume == HeuristicClickVolume::CopyReal
                                    ? "copy_real"
                                    : "geometric"},
                     {"geometric_p", heuristic.geometric_p}};
      break;
    case SimulatorKind::LlmSim:
      j["params"] = {{"attract_rel", pbm.attract_rel},
                     {"attract_nonrel", pbm.attract_nonrel},
                     {"examination_curve", pbm.examination_curve},
                     {"depth_shift_p", llm.depth_shift_p},
                     {"dwell_multiplier", llm.dwell_multiplier},
                     {"paraphrase_prob", llm.paraphrase_prob}};
      break;
  }
  return j;
}

SimulatorConfig simulator_config_from_json(const json& j) {
  SimulatorConfig cfg;
  const std::string kind_s = j.value("kind", "pbm");
  const auto kind = simulator_kind_from_string(kind_s);
  if (!kind) throw Error(ErrorCode::Config, "unknown simulator kind '" + kind_s + "'");
  cfg.kind = *kind;
  cfg.seed = j.value("seed", cfg.seed);
  cfg.rel_grade_threshold = j.value("rel_grade_threshold", cfg.rel_grade_threshold);
  if (j.contains("dwell")) {
    const json& d = j.at("dwell");
    cfg.dwell.mu = d.value("mu", cfg.dwell.mu);
    cfg.dwell.sigma = d.value("sigma", cfg.dwell.sigma);
    cfg.dwell.fitted = d.value("fitted", cfg.dwell.fitted);
  }
  const json p = j.value("params", json::object());
  switch (cfg.kind) {
    case SimulatorKind::Pbm:
    case SimulatorKind::LlmSim:
      cfg.pbm.attract_rel = p.value("attract_rel", cfg.pbm.attract_rel);
      cfg.pbm.attract_nonrel = p.value("attract_nonrel", cfg.pbm.attract_nonrel);
      cfg.pbm.examination_curve =
          p.value("examination_curve", cfg.pbm.examination_curve);
      if (cfg.kind == SimulatorKind::LlmSim) {
        cfg.llm.depth_shift_p = p.value("depth_shift_p", cfg.llm.depth_shift_p);
        cfg.llm.dwell_multiplier =
            p.value("dwell_multiplier", cfg.llm.dwell_multiplier);
        cfg.llm.paraphrase_prob =
            p.value("paraphrase_prob", cfg.llm.paraphrase_prob);
      }
      break;
    case SimulatorKind::Dbn:
      cfg.dbn.attract_rel = p.value("attract_rel", cfg.dbn.attract_rel);
      cfg.dbn.attract_nonrel = p.value("attract_nonrel", cfg.dbn.attract_nonrel);
      cfg.dbn.satisfy_rel = p.value("satisfy_rel", cfg.dbn.satisfy_rel);
      cfg.dbn.satisfy_nonrel = p.value("satisfy_nonrel", cfg.dbn.satisfy_nonrel);
      cfg.dbn.continuation = p.value("continuation", cfg.dbn.continuation);
      break;
    case SimulatorKind::Heuristic: {
      const std::string v = p.value("volume", "copy_real");
      if (v == "copy_real")
        cfg.heuristic.volume = HeuristicClickVolume::CopyReal;
      else if (v == "geometric")
        cfg.heuristic.volume = HeuristicClickVolume::Geometric;
      else
        throw Error(ErrorCode::Config, "unknown click volume '" + v + "'");
      cfg.heuristic.geometric_p = p.value("geometric_p", cfg.heuristic.geometric_p);
      break;
    }
  }
  cfg.validate();
  return cfg;
}

namespace {

void check_prob(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0))
    throw Error(ErrorCode::Config, std::string(name) + " outside [0,1]");
}

}  // namespace

void SimulatorConfig::validate() const {
  check_prob(pbm.attract_rel, "attract_rel");
  check_prob(pbm.attract_nonrel, "attract_nonrel");
  for (std::size_t i = 0; i < pbm.examination_curve.size(); ++i) {
    check_prob(pbm.examination_curve[i], "examination_curve");
    if (i > 0 && pbm.examination_curve[i] > pbm.examination_curve[i - 1])
      throw Error(ErrorCode::Config, "examination_curve must be non-increasing");
  }
  check_prob(dbn.attract_rel, "attract_rel");
  check_prob(dbn.attract_nonrel, "attract_nonrel");
  check_prob(dbn.satisfy_rel, "satisfy_rel");
  check_prob(dbn.satisfy_nonrel, "satisfy_nonrel");
  check_prob(dbn.continuation, "continuation");
  if (!(heuristic.geometric_p > 0.0 && heuristic.geometric_p <= 1.0))
    throw Error(ErrorCode::Config, "geometric_p outside (0,1]");
  if (!(llm.depth_shift_p > 0.0 && llm.depth_shift_p <= 1.0))
    throw Error(ErrorCode::Config, "depth_shift_p outside (0,1]");
  check_prob(llm.paraphrase_prob, "paraphrase_prob");
  if (!(llm.dwell_multiplier > 0.0))
    throw Error(ErrorCode::Config, "dwell_multiplier must be positive");
  if (!(dwell.sigma >= 0.0))
    throw Error(ErrorCode::Config, "dwell sigma must be non-negative");
}

std::string simulated_session_id(const std::string& real_id,
                                 const std::string& simulator_id) {
  return real_id + "#" + simulator_id;
}

std::optional<std::string> real_id_of_simulated(const std::string& sim_id) {
  const std::size_t pos = sim_id.rfind('#');
  if (pos == std::string::npos || pos == 0) return std::nullopt;
  return sim_id.substr(0, pos);
}

namespace {

std::int64_t median_event_gap(const Session& s) {
  std::vector<std::int64_t> gaps;
  for (std::size_t i = 1; i < s.events.size(); ++i)
    gaps.push_back(s.events[i].ts_ms - s.events[i - 1].ts_ms);
  if (gaps.empty()) return 5000;
  std::sort(gaps.begin(), gaps.end());
  const std::size_t k = gaps.size();
  const std::int64_t med =
      k % 2 ? gaps[k / 2] : (gaps[k / 2 - 1] + gaps[k / 2]) / 2;
  return med > 0 ? med : 5000;
}

double exam_at(const std::vector<double>& curve, int rank) {
  if (curve.empty()) return 1.0 / rank;
  const std::size_t i = std::min<std::size_t>(rank - 1, curve.size() - 1);
  return curve[i];
}

bool relevant(const DocGrades& grades, const std::string& doc, int threshold) {
  auto it = grades.find(doc);
  return it != grades.end() && it->second >= threshold;
}

std::vector<int> plan_pbm(const SerpPayload& serp, const DocGrades& grades,
                          const SimulatorConfig& cfg, RngStream& rng,
                          bool depth_shift) {
  std::vector<int> clicks;
  const int n = static_cast<int>(serp.results.size());
  for (int r = 1; r <= n; ++r) {
    int eff = r;
    if (depth_shift) {
      const int shift = static_cast<int>(
          std::min<std::uint64_t>(rng.geometric(cfg.llm.depth_shift_p), 1000));
      eff = std::max(1, r - shift);
    }
    const bool rel = relevant(grades, serp.results[r - 1].doc_id,
                              cfg.rel_grade_threshold);
    const double attract = rel ? cfg.pbm.attract_rel : cfg.pbm.attract_nonrel;
    if (rng.bernoulli(exam_at(cfg.pbm.examination_curve, eff) * attract))
      clicks.push_back(r);
  }
  return clicks;
}

std::vector<int> plan_dbn(const SerpPayload& serp, const DocGrades& grades,
                          const SimulatorConfig& cfg, RngStream& rng) {
  std::vector<int> clicks;
  const int n = static_cast<int>(serp.results.size());
  for (int r = 1; r <= n; ++r) {
    const bool rel = relevant(grades, serp.results[r - 1].doc_id,
                              cfg.rel_grade_threshold);
    if (rng.bernoulli(rel ? cfg.dbn.attract_rel : cfg.dbn.attract_nonrel)) {
      clicks.push_back(r);
      if (rng.bernoulli(rel ? cfg.dbn.satisfy_rel : cfg.dbn.satisfy_nonrel))
        break;
    }
    if (r < n && !rng.bernoulli(cfg.dbn.continuation)) break;
  }
  return clicks;
}

std::vector<int> plan_heuristic(int serp_size, int k, RngStream& rng) {
  std::vector<int> avail(serp_size);
  std::vector<double> weights(serp_size);
  for (int r = 0; r < serp_size; ++r) {
    avail[r] = r + 1;
    weights[r] = 1.0 / (r + 1);
  }
  k = std::min(k, serp_size);
  std::vector<int> clicks;
  for (int t = 0; t < k; ++t) {
    const std::size_t idx = rng.weighted_index(weights);
    clicks.push_back(avail[idx]);
    avail.erase(avail.begin() + static_cast<std::ptrdiff_t>(idx));
    weights.erase(weights.begin() + static_cast<std::ptrdiff_t>(idx));
  }
  std::sort(clicks.begin(), clicks.end());
  return clicks;
}

const std::vector<std::string >& paraphrase_vocab() {
  static const std::vector<std::string> v = {
      "please", "show",  "me",     "more",   "detailed", "results",
      "about",  "this",  "topic",  "thanks", "related",  "information"};
  return v;
}

}  // namespace

Session simulate_session(const Session& real, const DocGrades& grades,
                         const SimulatorConfig& cfg, RngStream& rng) {
  Session out;
  out.schema_version = real.schema_version;
  out.dataset_id = real.dataset_id;
  out.user_hash = real.user_hash;
  out.label = SessionLabel::Simulated;
  out.simulator_id = cfg.simulator_id();
  out.session_id = simulated_session_id(real.session_id, *out.simulator_id);

  // Real click volume per SERP, attributed positionally, for CopyReal.
  std::vector<int> click_counts;
  {
    int cur = -1;
    for (const Event& e : real.events) {
      if (e.type == EventType::SerpView) {
        click_counts.push_back(0);
        cur = static_cast<int>(click_counts.size()) - 1;
      } else if (e.type == EventType::Click && cur >= 0) {
        ++click_counts[cur];
      }
    }
  }

  const std::int64_t gap = median_event_gap(real);
  const bool is_llm = cfg.kind == SimulatorKind::LlmSim;
  const double dwell_mult = is_llm ? cfg.llm.dwell_multiplier : 1.0;

  std::int64_t ts = real.events.empty() ? 0 : real.events.front().ts_ms;
  int query_ordinal = 0;
  int serp_ordinal = 0;

  for (const Event& e : real.events) {
    switch (e.type) {
      case EventType::Query: {
        Event q = e;
        q.ts_ms = std::max(e.ts_ms, ts);
        if (is_llm && query_ordinal > 0 && rng.bernoulli(cfg.llm.paraphrase_prob)) {
          const auto& vocab = paraphrase_vocab();
          std::string text = q.query()->query_text;
          const int extra = 2 + static_cast<int>(rng.uniform_int(3));
          for (int t = 0; t < extra; ++t)
            text += " " + vocab[rng.uniform_int(vocab.size())];
          q.payload = QueryPayload{std::move(text)};
        }
        ts = q.ts_ms;
        out.events.push_back(std::move(q));
        ++query_ordinal;
        break;
      }
      case EventType::SerpView: {
        Event sv = e;
        sv.ts_ms = std::max(e.ts_ms, ts);
        ts = sv.ts_ms;
        const SerpPayload& serp = *sv.serp();
        out.events.push_back(sv);

        std::vector<int> clicks;
        switch (cfg.kind) {
          case SimulatorKind::Pbm:
            clicks = plan_pbm(serp, grades, cfg, rng, false);
            break;
          case SimulatorKind::LlmSim:
            clicks = plan_pbm(serp, grades, cfg, rng, true);
            break;
          case SimulatorKind::Dbn:
            clicks = plan_dbn(serp, grades, cfg, rng);
            break;
          case SimulatorKind::Heuristic: {
            int k;
            if (cfg.heuristic.volume == HeuristicClickVolume::CopyReal) {
              k = serp_ordinal < static_cast<int>(click_counts.size())
                      ? click_counts[serp_ordinal]
                      : 0;
            } else {
              k = static_cast<int>(std::min<std::uint64_t>(
                  rng.geometric(cfg.heuristic.geometric_p),
                  serp.results.size()));
            }
            clicks = plan_heuristic(static_cast<int>(serp.results.size()), k, rng);
            break;
          }
        }

        std::vector<std::string> doc_at_rank(serp.results.size() + 1);
        for (const SerpResult& r : serp.results)
          if (r.rank >= 1 && r.rank <= static_cast<int>(serp.results.size()))
            doc_at_rank[r.rank] = r.doc_id;

        for (int rank : clicks) {
          ts += gap;
          Event c;
          c.type = EventType::Click;
          c.ts_ms = ts;
          c.query_id = sv.query_id;
          c.payload = ClickPayload{doc_at_rank[rank], rank};
          out.events.push_back(std::move(c));
          ts += gap;
          Event d;
          d.type = EventType::Dwell;
          d.ts_ms = ts;
          d.query_id = sv.query_id;
          const double dwell =
              rng.lognormal(cfg.dwell.mu, cfg.dwell.sigma) * dwell_mult;
          d.payload = DwellPayload{
              doc_at_rank[rank],
              std::max<std::int64_t>(0, std::llround(dwell))};
          out.events.push_back(std::move(d));
        }
        ++serp_ordinal;
        break;
      }
      case EventType::Click:
      case EventType::Dwell:
        break;  // replaced by the model's own behavior
      case EventType::ConvUser:
      case EventType::ConvSystem: {
        Event c = e;
        c.ts_ms = std::max(e.ts_ms, ts);
        ts = c.ts_ms;
        out.events.push_back(std::move(c));
        break;
      }
    }
  }
  return out;
}

SessionCorpus simulate_corpus(const SessionCorpus& real, const DocGrades& grades,
                              SimulatorConfig cfg) {
  cfg.validate();
  if (!cfg.dwell.fitted) {
    DwellModel fitted = fit_dwell_lognormal(real);
    if (fitted.fitted) cfg.dwell = fitted;
  }

  SessionCorpus out;
  for (const Session& s : real.sessions) {
    RngStream rng = RngStream::from(cfg.seed, {"sim", cfg.simulator_id(), s.session_id});
    Session sim = simulate_session(s, grades, cfg, rng);
    const std::vector<Violation> v = validate_session(sim);
    if (!v.empty())
      throw Error(ErrorCode::Internal,
                  "simulated session " + sim.session_id + " invalid: " +
                      to_string(v.front().code));
    out.manifest.emitted_event_count += static_cast<std::int64_t>(sim.events.size());
    out.sessions.push_back(std::move(sim));
  }

  LossManifest& m = out.manifest;
  m.dataset_id = real.manifest.dataset_id;
  m.dataset_version = real.manifest.dataset_version;
  m.seed = cfg.seed;
  m.generator = json{{"simulator", cfg.to_json()}};
  m.config_hash = config_hash(cfg.to_json());
  // One source record per real session replayed.
  m.input_record_count = static_cast<std::int64_t>(real.sessions.size());
  m.candidate_session_count = static_cast<std::int64_t>(real.sessions.size());
  m.emitted_session_count = static_cast<std::int64_t>(out.sessions.size());
  m.emitted_record_count = m.emitted_session_count;
  m.dropped_sessions_by_reason = {{kDropBelowMinLength, 0},
                                  {kDropValidationFailed, 0},
                                  {kDropParseError, 0}};
  m.dropped_records_by_reason = m.dropped_sessions_by_reason;
  m.synthetic_serp = real.manifest.synthetic_serp;
  m.timestamp_quantization_ms = 1;
  m.missingness = compute_missingness(out.sessions);
  return out;
}

}  // namespace simeval
