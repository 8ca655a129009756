#include "simeval/simulate.hpp"

#include <cmath>
#include <sstream>

#include "doctest.h"

using namespace simeval;
using nlohmann::json;

namespace {

Session serp_session(const std::string& id, int depth, int n_queries = 1,
                     int real_clicks = 0) {
  Session s;
  s.session_id = id;
  s.dataset_id = "d";
  s.label = SessionLabel::Real;
  std::int64_t ts = 0;
  for (int qk = 0; qk < n_queries; ++qk) {
    const std::string qid = id + ":q" + std::to_string(qk);
    Event q;
    q.type = EventType::Query;
    q.ts_ms = ts;
    q.query_id = qid;
    q.payload = QueryPayload{"query number " + std::to_string(qk)};
    s.events.push_back(q);
    ts += 1000;
    SerpPayload serp;
    for (int r = 1; r <= depth; ++r)
      serp.results.push_back({"r" + std::to_string(r), r});
    Event sv;
    sv.type = EventType::SerpView;
    sv.ts_ms = ts;
    sv.query_id = qid;
    sv.payload = serp;
    s.events.push_back(sv);
    ts += 1000;
    for (int c = 0; c < real_clicks && c < depth; ++c) {
      Event ce;
      ce.type = EventType::Click;
      ce.ts_ms = ts;
      ce.query_id = qid;
      ce.payload = ClickPayload{"r" + std::to_string(c + 1), c + 1};
      s.events.push_back(ce);
      ts += 1000;
      Event de;
      de.type = EventType::Dwell;
      de.ts_ms = ts;
      de.query_id = qid;
      de.payload = DwellPayload{"r" + std::to_string(c + 1), 2000};
      s.events.push_back(de);
      ts += 1000;
    }
    ts += 30000;
  }
  return s;
}

DocGrades all_relevant(int depth) {
  DocGrades g;
  for (int r = 1; r <= depth; ++r) g["r" + std::to_string(r)] = 1;
  return g;
}

int clicks_at_rank(const Session& s, int rank) {
  int n = 0;
  for (const Event& e : s.events)
    if (const auto* c = e.click())
      if (c->rank == rank) ++n;
  return n;
}

int total_clicks(const Session& s) {
  int n = 0;
  for (const Event& e : s.events)
    if (e.type == EventType::Click) ++n;
  return n;
}

}  // namespace

TEST_CASE("simulator kind names round trip") {
  for (auto k : {SimulatorKind::Pbm, SimulatorKind::Dbn, SimulatorKind::Heuristic,
                 SimulatorKind::LlmSim}) {
    auto back = simulator_kind_from_string(to_string(k));
    REQUIRE(back.has_value());
    CHECK(*back == k);
  }
  CHECK_FALSE(simulator_kind_from_string("markov").has_value());
}

TEST_CASE("session id pairing") {
  CHECK(simulated_session_id("abc", "pbm") == "abc#pbm");
  CHECK(real_id_of_simulated("abc#pbm") == "abc");
  CHECK(real_id_of_simulated("a#b#pbm") == "a#b");
  CHECK_FALSE(real_id_of_simulated("abc").has_value());
  CHECK_FALSE(real_id_of_simulated("#pbm").has_value());
}

TEST_CASE("lognormal dwell fit") {
  SessionCorpus corpus;
  Session s;
  s.session_id = "s";
  s.dataset_id = "d";
  Event q;
  q.type = EventType::Query;
  q.ts_ms = 0;
  q.payload = QueryPayload{"x"};
  s.events.push_back(q);
  std::int64_t ts = 1;
  for (std::int64_t dwell : {100, 200, 400, 0}) {
    SerpPayload serp;
    serp.results = {{"d1", 1}};
    Event sv;
    sv.type = EventType::SerpView;
    sv.ts_ms = ts++;
    sv.payload = serp;
    s.events.push_back(sv);
    Event c;
    c.type = EventType::Click;
    c.ts_ms = ts++;
    c.payload = ClickPayload{"d1", 1};
    s.events.push_back(c);
    Event d;
    d.type = EventType::Dwell;
    d.ts_ms = ts++;
    d.payload = DwellPayload{"d1", dwell};
    s.events.push_back(d);
  }
  corpus.sessions.push_back(s);

  const DwellModel m = fit_dwell_lognormal(corpus);
  CHECK(m.fitted);
  // zero-length dwells are excluded from the fit
  CHECK(m.mu == doctest::Approx(5.298317366548036).epsilon(1e-12));
  CHECK(m.sigma == doctest::Approx(0.5659523030068883).epsilon(1e-12));

  const DwellModel def = fit_dwell_lognormal(SessionCorpus{});
  CHECK_FALSE(def.fitted);
  CHECK(def.mu == doctest::Approx(9.6));
}

TEST_CASE("config validation") {
  SimulatorConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.pbm.attract_rel = 1.5;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = SimulatorConfig{};
  cfg.pbm.examination_curve = {0.5, 0.8};  // increasing
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = SimulatorConfig{};
  cfg.heuristic.geometric_p = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = SimulatorConfig{};
  cfg.llm.dwell_multiplier = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("config json round trip") {
  for (auto kind : {SimulatorKind::Pbm, SimulatorKind::Dbn,
                    SimulatorKind::Heuristic, SimulatorKind::LlmSim}) {
    SimulatorConfig cfg;
    cfg.kind = kind;
    cfg.seed = 17;
    cfg.pbm.examination_curve = {1.0, 0.5, 0.25};
    cfg.heuristic.volume = HeuristicClickVolume::Geometric;
    cfg.llm.paraphrase_prob = 0.25;
    const json j = cfg.to_json();
    const SimulatorConfig back = simulator_config_from_json(j);
    CHECK(back.to_json() == j);
    CHECK(back.simulator_id() == to_string(kind));
  }
  CHECK_THROWS_AS(simulator_config_from_json(json{{"kind", "markov"}}), Error);
  CHECK_THROWS_AS(simulator_config_from_json(
                      json{{"kind", "heuristic"},
                           {"params", json{{"volume", "psychic"}}}}),
                  Error);
  CHECK_THROWS_AS(simulator_config_from_json(
                      json{{"kind", "pbm"},
                           {"params", json{{"attract_rel", 2.0}}}}),
                  Error);
}

TEST_CASE("pbm click rates follow examination times attractiveness") {
  const int depth = 5;
  const DocGrades grades = all_relevant(depth);
  SimulatorConfig cfg;
  cfg.kind = SimulatorKind::Pbm;

  const int n = 4000;
  RngStream rng(42);
  const Session real = serp_session("r", depth);
  int at1 = 0, at2 = 0, at4 = 0;
  for (int i = 0; i < n; ++i) {
    const Session sim = simulate_session(real, grades, cfg, rng);
    at1 += clicks_at_rank(sim, 1);
    at2 += clicks_at_rank(sim, 2);
    at4 += clicks_at_rank(sim, 4);
  }
  // click prob at rank r is 0.55 / r for relevant docs
  CHECK(std::abs(at1 / double(n) - 0.55) < 0.04);
  CHECK(std::abs(at2 / double(n) - 0.275) < 0.04);
  CHECK(std::abs(at4 / double(n) - 0.1375) < 0.03);

  // non-relevant docs use the low attractiveness
  int nonrel_at1 = 0;
  for (int i = 0; i < n; ++i) {
    const Session sim = simulate_session(real, DocGrades{}, cfg, rng);
    nonrel_at1 += clicks_at_rank(sim, 1);
  }
  CHECK(std::abs(nonrel_at1 / double(n) - 0.05) < 0.02);
}

TEST_CASE("pbm degenerate curve is deterministic") {
  const int depth = 4;
  const DocGrades grades = all_relevant(depth);
  SimulatorConfig cfg;
  cfg.kind = SimulatorKind::Pbm;
  cfg.pbm.attract_rel = 1.0;
  cfg.pbm.attract_nonrel = 0.0;

  SUBCASE("curve {1, 0}: only rank 1 is examined") {
    cfg.pbm.examination_curve = {1.0, 0.0};
    RngStream rng(1);
    const Session sim = simulate_session(serp_session("r", depth), grades, cfg, rng);
    CHECK(total_clicks(sim) == 1);
    CHECK(clicks_at_rank(sim, 1) == 1);
  }
  SUBCASE("short curve reuses its last value for deeper ranks") {
    cfg.pbm.examination_curve = {1.0};
    RngStream rng(1);
    const Session sim = simulate_session(serp_session("r", depth), grades, cfg, rng);
    CHECK(total_clicks(sim) == depth);  // every rank examined and attracted
    for (int r = 1; r <= depth; ++r) CHECK(clicks_at_rank(sim, r) == 1);
  }
}

TEST_CASE("dbn cascade") {
  const int depth = 5;

  SUBCASE("immediate satisfaction stops at the first click") {
    SimulatorConfig cfg;
    cfg.kind = SimulatorKind::Dbn;
    cfg.dbn.attract_rel = 1.0;
    cfg.dbn.satisfy_rel = 1.0;
    RngStream rng(3);
    const Session sim =
        simulate_session(serp_session("r", depth), all_relevant(depth), cfg, rng);
    CHECK(total_clicks(sim) == 1);
    CHECK(clicks_at_rank(sim, 1) == 1);
  }
  SUBCASE("no satisfaction and certain continuation clicks everything") {
    SimulatorConfig cfg;
    cfg.kind = SimulatorKind::Dbn;
    cfg.dbn.attract_rel = 1.0;
    cfg.dbn.satisfy_rel = 0.0;
    cfg.dbn.continuation = 1.0;
    RngStream rng(3);
    const Session sim =
        simulate_session(serp_session("r", depth), all_relevant(depth), cfg, rng);
    CHECK(total_clicks(sim) == depth);
  }
  SUBCASE("examination decays geometrically with the continuation parameter") {
    SimulatorConfig cfg;
    cfg.kind = SimulatorKind::Dbn;
    cfg.dbn.attract_nonrel = 1.0;  // click whenever examined
    cfg.dbn.satisfy_nonrel = 0.0;
    cfg.dbn.continuation = 0.2;
    const int n = 5000;
    RngStream rng(9);
    const Session real = serp_session("r", depth);
    int at2 = 0, at3 = 0;
    for (int i = 0; i < n; ++i) {
      const Session sim = simulate_session(real, DocGrades{}, cfg, rng);
      at2 += clicks_at_rank(sim, 2);
      at3 += clicks_at_rank(sim, 3);
    }
    CHECK(std::abs(at2 / double(n) - 0.2) < 0.03);
    CHECK(std::abs(at3 / double(n) - 0.04) < 0.015);
  }
}

TEST_CASE("heuristic copies the real click volume") {
  SimulatorConfig cfg;
  cfg.kind = SimulatorKind::Heuristic;
  cfg.heuristic.volume = HeuristicClickVolume::CopyReal;

  RngStream rng(5);
  const Session real = serp_session("r", 6, 1, 3);
  const Session sim = simulate_session(real, DocGrades{}, cfg, rng);
  CHECK(total_clicks(sim) == 3);
  // without-replacement sampling: distinct valid ranks matching SERP docs
  std::vector<int> ranks;
  for (const Event& e : sim.events)
    if (const auto* c = e.click()) {
      CHECK(c->rank >= 1);
      CHECK(c->rank <= 6);
      CHECK(c->doc_id == "r" + std::to_string(c->rank));
      ranks.push_back(c->rank);
    }
  std::sort(ranks.begin(), ranks.end());
  CHECK(std::adjacent_find(ranks.begin(), ranks.end()) == ranks.end());

  const Session quiet = serp_session("q", 6, 1, 0);
  const Session sim2 = simulate_session(quiet, DocGrades{}, cfg, rng);
  CHECK(total_clicks(sim2) == 0);
}

TEST_CASE("heuristic geometric volume has the configured mean") {
  SimulatorConfig cfg;
  cfg.kind = SimulatorKind::Heuristic;
  cfg.heuristic.volume = HeuristicClickVolume::Geometric;
  cfg.heuristic.geometric_p = 0.5;

  const int n = 4000;
  RngStream rng(11);
  const Session real = serp_session("r", 5);
  double total = 0;
  for (int i = 0; i < n; ++i)
    total += total_clicks(simulate_session(real, DocGrades{}, cfg, rng));
  // E[min(G, 5)] for G ~ Geom(0.5) counting failures = 0.96875
  CHECK(std::abs(total / n - 0.96875) < 0.1);
}

TEST_CASE("llm-sim without stylization reproduces pbm draw for draw") {
  const int depth = 6;
  const DocGrades grades = all_relevant(depth);
  const Session real = serp_session("r", depth, 2);

  SimulatorConfig pbm;
  pbm.kind = SimulatorKind::Pbm;

  SimulatorConfig llm;
  llm.kind = SimulatorKind::LlmSim;
  llm.llm.depth_shift_p = 1.0;     // geometric(1) draws nothing, shifts nothing
  llm.llm.dwell_multiplier = 1.0;
  llm.llm.paraphrase_prob = 0.0;   // bernoulli(0) draws nothing

  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    RngStream r1(seed), r2(seed);
    const Session a = simulate_session(real, grades, pbm, r1);
    const Session b = simulate_session(real, grades, llm, r2);
    REQUIRE(a.events.size() == b.events.size());
    for (std::size_t i = 0; i < a.events.size(); ++i) CHECK(a.events[i] == b.events[i]);
    CHECK(a.simulator_id == "pbm");
    CHECK(b.simulator_id == "llm_sim");
  }
}

TEST_CASE("llm-sim paraphrases follow-up queries only") {
  SimulatorConfig cfg;
  cfg.kind = SimulatorKind::LlmSim;
  cfg.llm.paraphrase_prob = 1.0;

  RngStream rng(13);
  const Session real = serp_session("r", 4, 3);
  const Session sim = simulate_session(real, all_relevant(4), cfg, rng);

  std::vector<std::string> real_q, sim_q;
  for (const Event& e : real.events)
    if (const auto* q = e.query()) real_q.push_back(q->query_text);
  for (const Event& e : sim.events)
    if (const auto* q = e.query()) sim_q.push_back(q->query_text);
  REQUIRE(real_q.size() == 3);
  REQUIRE(sim_q.size() == 3);
  CHECK(sim_q[0] == real_q[0]);  // the opening query is never rewritten
  for (std::size_t k = 1; k < 3; ++k) {
    CHECK(sim_q[k].substr(0, real_q[k].size()) == real_q[k]);
    CHECK(sim_q[k].size() > real_q[k].size());
    // between 2 and 4 appended tokens
    std::istringstream orig(real_q[k]), para(sim_q[k]);
    int n_orig = 0, n_para = 0;
    std::string w;
    while (orig >> w) ++n_orig;
    while (para >> w) ++n_para;
    CHECK(n_para - n_orig >= 2);
    CHECK(n_para - n_orig <= 4);
  }
}

TEST_CASE("llm depth shift raises deep-rank examination") {
  const int depth = 8;
  const DocGrades grades = all_relevant(depth);
  const Session real = serp_session("r", depth);

  SimulatorConfig pbm;
  pbm.kind = SimulatorKind::Pbm;
  SimulatorConfig llm;
  llm.kind = SimulatorKind::LlmSim;
  llm.llm.paraphrase_prob = 0.0;

  const int n = 2500;
  RngStream r1(21), r2(22);
  int deep_pbm = 0, deep_llm = 0;
  for (int i = 0; i < n; ++i) {
    const Session a = simulate_session(real, grades, pbm, r1);
    const Session b = simulate_session(real, grades, llm, r2);
    for (int r = 5; r <= depth; ++r) {
      deep_pbm += clicks_at_rank(a, r);
      deep_llm += clicks_at_rank(b, r);
    }
  }
  CHECK(deep_llm > deep_pbm + 100);
}

TEST_CASE("simulated corpus pairs with the real one") {
  SessionCorpus real;
  real.manifest.dataset_id = "d";
  for (int i = 0; i < 8; ++i)
    real.sessions.push_back(serp_session("real" + std::to_string(i), 5, 1, 1));
  const DocGrades grades = all_relevant(5);

  SimulatorConfig cfg;
  cfg.kind = SimulatorKind::Pbm;
  cfg.seed = 31;

  const SessionCorpus sim = simulate_corpus(real, grades, cfg);
  REQUIRE(sim.sessions.size() == real.sessions.size());
  for (std::size_t i = 0; i < sim.sessions.size(); ++i) {
    const Session& s = sim.sessions[i];
    CHECK(s.label == SessionLabel::Simulated);
    CHECK(s.simulator_id == "pbm");
    CHECK(s.session_id == real.sessions[i].session_id + "#pbm");
    CHECK(real_id_of_simulated(s.session_id) == real.sessions[i].session_id);
    CHECK(s.dataset_id == "d");
    CHECK(s.user_hash == real.sessions[i].user_hash);
    CHECK(validate_session(s).empty());
    std::int64_t prev = s.events.front().ts_ms;
    for (const Event& e : s.events) {
      CHECK(e.ts_ms >= prev);
      prev = e.ts_ms;
    }
  }

  // dwell model is fitted from the real corpus when not preset
  CHECK(sim.manifest.generator.at("simulator").at("dwell").at("fitted") == true);
  CHECK(sim.manifest.seed == 31);
  CHECK_FALSE(sim.manifest.config_hash.empty());
  CHECK(sim.manifest.emitted_session_count == 8);

  const SessionCorpus again = simulate_corpus(real, grades, cfg);
  CHECK(again.sessions == sim.sessions);

  cfg.seed = 32;
  const SessionCorpus other = simulate_corpus(real, grades, cfg);
  CHECK(other.sessions != sim.sessions);
}

TEST_CASE("synthetic events advance by the median real gap") {
  SimulatorConfig cfg;
  cfg.kind = SimulatorKind::Pbm;
  cfg.pbm.attract_rel = 1.0;
  cfg.pbm.examination_curve = {1.0};  // every rank clicked, no randomness

  RngStream rng(2);
  const Session real = serp_session("r", 2);  // gaps of 1000 ms
  const Session sim = simulate_session(real, all_relevant(2), cfg, rng);
  REQUIRE(sim.events.size() == 6);  // Q SERP C D C D
  CHECK(sim.events[0].ts_ms == 0);
  CHECK(sim.events[1].ts_ms == 1000);
  CHECK(sim.events[2].ts_ms == 2000);
  CHECK(sim.events[3].ts_ms == 3000);
  CHECK(sim.events[4].ts_ms == 4000);
  CHECK(sim.events[5].ts_ms == 5000);
  CHECK(sim.events[2].type == EventType::Click);
  CHECK(sim.events[3].type == EventType::Dwell);
}

TEST_CASE("preset dwell model is used unchanged") {
  SessionCorpus real;
  real.manifest.dataset_id = "d";
  real.sessions.push_back(serp_session("a", 3, 1, 2));

  SimulatorConfig cfg;
  cfg.kind = SimulatorKind::Pbm;
  cfg.dwell.mu = 4.0;
  cfg.dwell.sigma = 0.1;
  cfg.dwell.fitted = true;

  const SessionCorpus sim = simulate_corpus(real, all_relevant(3), cfg);
  CHECK(sim.manifest.generator.at("simulator").at("dwell").at("mu") == 4.0);
}
