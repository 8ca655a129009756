#include "simeval/testbed.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "simeval/rng.hpp"

namespace simeval {

using nlohmann::json;

json TestbedConfig::to_json() const {
  return json{{"n_queries", n_queries},
              {"pool_size", pool_size},
              {"pool_size_max", pool_size_max},
              {"seed", seed}};
}

json Testbed::to_json() const {
  json j;
  j["seed"] = seed;
  j["queries"] = queries;
  json pools_j = json::object();
  for (const auto& [q, docs] : pools) pools_j[q] = docs;
  j["pools"] = pools_j;
  json qrels_j = json::object();
  for (const auto& [q, docs] : qrels) {
    json dj = json::object();
    for (const auto& [d, g] : docs) dj[d] = g;
    qrels_j[q] = dj;
  }
  j["qrels"] = qrels_j;
  return j;
}

Testbed Testbed::from_json(const json& j) {
  Testbed tb;
  tb.seed = j.value("seed", std::uint64_t{0});
  tb.queries = j.at("queries").get<std::vector<std::string>>();
  for (const auto& [q, docs] : j.at("pools").items())
    tb.pools[q] = docs.get<std::vector<std::string>>();
  for (const auto& [q, docs] : j.at("qrels").items())
    for (const auto& [d, g] : docs.items())
      tb.qrels[q][d] = g.get<int>();
  return tb;
}

Testbed build_testbed(const Qrels& qrels, const TestbedConfig& cfg) {
  if (cfg.n_queries < 1) throw Error(ErrorCode::Config, "n_queries < 1");
  if (cfg.pool_size < 2) throw Error(ErrorCode::Config, "pool_size < 2");
  if (cfg.pool_size_max != 0 && cfg.pool_size_max < cfg.pool_size)
    throw Error(ErrorCode::Config, "pool_size_max < pool_size");

  // Only queries with at least one positive judgment are eligible, so every
  // pool is guaranteed a judged positive.
  std::vector<std::string> eligible;
  for (const auto& [q, docs] : qrels) {
    bool any_pos = false;
    for (const auto& [d, g] : docs) any_pos = any_pos || g > 0;
    if (any_pos) eligible.push_back(q);
  }
  if (static_cast<int>(eligible.size()) < cfg.n_queries)
    throw Error(ErrorCode::InsufficientData,
                "requested " + std::to_string(cfg.n_queries) + " queries, " +
                    std::to_string(eligible.size()) + " eligible");

  RngStream rng = RngStream::from(cfg.seed, {"testbed", "queries"});
  rng.shuffle(eligible);
  eligible.resize(cfg.n_queries);
  std::sort(eligible.begin(), eligible.end());

  Testbed tb;
  tb.seed = cfg.seed;
  tb.queries = eligible;

  for (const std::string& q : tb.queries) {
    const auto& judged = qrels.at(q);
    tb.qrels[q] = judged;

    int target = cfg.pool_size;
    if (cfg.pool_size_max > cfg.pool_size) {
      RngStream prng = RngStream::from(cfg.seed, {"testbed", "poolsize", q});
      target += static_cast<int>(
          prng.uniform_int(cfg.pool_size_max - cfg.pool_size + 1));
    }

    std::vector<std::string> pool;
    pool.reserve(target);
    for (const auto& [d, g] : judged) pool.push_back(d);
    int k = 0;
    while (static_cast<int>(pool.size()) < target)
      pool.push_back(q + ":distractor:" + std::to_string(k++));
    tb.pools[q] = std::move(pool);
  }
  return tb;
}

SystemRun synthesize_system(const Testbed& tb, double alpha,
                            std::uint64_t system_seed,
                            const std::string& system_id, double noise_scale) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw Error(ErrorCode::Config, "alpha outside [0,1]");
  if (!(noise_scale >= 0.0))
    throw Error(ErrorCode::Config, "noise_scale must be non-negative");

  SystemRun run;
  run.system_id = system_id;
  run.alpha = alpha;
  for (const std::string& q : tb.queries) {
    const auto& pool = tb.pools.at(q);
    const auto& judged = tb.qrels.at(q);
    int max_grade = 0;
    for (const auto& [d, g] : judged) max_grade = std::max(max_grade, g);

    std::vector<std::pair<double, std::string>> scored;
    scored.reserve(pool.size());
    for (const std::string& doc : pool) {
      auto it = judged.find(doc);
      const int grade = it == judged.end() ? 0 : it->second;
      const double rel_norm =
          max_grade > 0 ? static_cast<double>(grade) / max_grade : 0.0;
      // Noise is a pure function of (system_seed, query, doc): evaluation
      // order cannot change a system's rankings.
      RngStream rng = RngStream::from(system_seed, {"sysnoise", q, doc});
      const double score =
          alpha * rel_norm + (1.0 - alpha) * noise_scale * rng.normal();
      scored.emplace_back(score, doc);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    std::vector<std::string> ranking;
    ranking.reserve(scored.size());
    for (auto& [s, d] : scored) ranking.push_back(std::move(d));
    run.rankings[q] = std::move(ranking);
  }
  return run;
}

std::vector<SystemRun> synthesize_system_panel(const Testbed& tb, int n_systems,
                                               double alpha_lo, double alpha_hi,
                                               std::uint64_t seed) {
  if (n_systems < 2) throw Error(ErrorCode::Config, "n_systems < 2");
  if (!(alpha_lo >= 0.0 && alpha_hi <= 1.0 && alpha_lo <= alpha_hi))
    throw Error(ErrorCode::Config, "bad alpha range");
  std::vector<SystemRun> panel;
  panel.reserve(n_systems);
  for (int i = 0; i < n_systems; ++i) {
    std::string id = "sys" + std::string(i + 1 < 10 ? "0" : "") + std::to_string(i + 1);
    const double alpha =
        alpha_lo + (alpha_hi - alpha_lo) * i / static_cast<double>(n_systems - 1);
    panel.push_back(
        synthesize_system(tb, alpha, derive_seed(seed, {"system", id}), id));
  }
  return panel;
}

double ndcg_at_k(const std::vector<std::string>& ranking,
                 const std::map<std::string, int>& grades, int k) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k < 1");
  double dcg = 0;
  const int depth = std::min<int>(k, static_cast<int>(ranking.size()));
  for (int i = 1; i <= depth; ++i) {
    auto it = grades.find(ranking[i - 1]);
    if (it == grades.end()) continue;
    dcg += static_cast<double>(it->second) / std::log2(i + 1.0);
  }
  std::vector<int> ideal;
  ideal.reserve(grades.size());
  for (const auto& [d, g] : grades) ideal.push_back(g);
  std::sort(ideal.begin(), ideal.end(), std::greater<int>());
  double idcg = 0;
  for (int i = 1; i <= std::min<int>(k, static_cast<int>(ideal.size())); ++i)
    idcg += static_cast<double>(ideal[i - 1]) / std::log2(i + 1.0);
  if (idcg <= 0) return 0.0;
  return dcg / idcg;
}

TesterScores qrels_scores(const Testbed& tb, const std::vector<SystemRun>& systems,
                          int k) {
  TesterScores out;
  out.tester_id = "qrels";
  out.per_query.resize(systems.size(), tb.queries.size());
  for (std::size_t s = 0; s < systems.size(); ++s) {
    out.system_ids.push_back(systems[s].system_id);
    for (std::size_t qi = 0; qi < tb.queries.size(); ++qi) {
      const std::string& q = tb.queries[qi];
      out.per_query(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(qi)) =
          ndcg_at_k(systems[s].rankings.at(q), tb.qrels.at(q), k);
    }
  }
  out.per_system.resize(systems.size());
  for (std::size_t s = 0; s < systems.size(); ++s)
    out.per_system[s] =
        out.per_query.row(static_cast<Eigen::Index>(s)).mean();
  return out;
}

TesterScores click_derived_scores(const Testbed& tb,
                                  const std::vector<SystemRun>& systems,
                                  const SimulatorConfig& tester, int replays,
                                  std::uint64_t seed, int k) {
  tester.validate();
  if (replays < 1) throw Error(ErrorCode::Config, "replays < 1");
  if (tester.kind == SimulatorKind::Heuristic &&
      tester.heuristic.volume == HeuristicClickVolume::CopyReal)
    throw Error(ErrorCode::Config,
                "copy_real click volume needs paired real sessions; use the "
                "geometric volume model for testbed replays");

  TesterScores out;
  out.tester_id = tester.simulator_id();
  out.per_query.resize(systems.size(), tb.queries.size());

  for (std::size_t s = 0; s < systems.size(); ++s) {
    out.system_ids.push_back(systems[s].system_id);
    for (std::size_t qi = 0; qi < tb.queries.size(); ++qi) {
      const std::string& q = tb.queries[qi];
      const std::vector<std::string>& ranking = systems[s].rankings.at(q);
      const auto& judged = tb.qrels.at(q);
      const int depth = std::min<int>(k, static_cast<int>(ranking.size()));

      Session probe;
      probe.dataset_id = "probe";
      probe.session_id = "probe:" + systems[s].system_id + ":" + q;
      probe.label = SessionLabel::Real;
      Event qe;
      qe.type = EventType::Query;
      qe.ts_ms = 0;
      qe.query_id = q;
      qe.payload = QueryPayload{q};
      probe.events.push_back(std::move(qe));
      SerpPayload serp;
      for (int r = 1; r <= depth; ++r)
        serp.results.push_back(SerpResult{ranking[r - 1], r});
      Event sv;
      sv.type = EventType::SerpView;
      sv.ts_ms = 1000;
      sv.query_id = q;
      sv.payload = std::move(serp);
      probe.events.push_back(std::move(sv));

      double acc = 0;
      for (int t = 0; t < replays; ++t) {
        RngStream rng = RngStream::from(
            seed, {"replay", systems[s].system_id, q, std::to_string(t)});
        const Session sim = simulate_session(probe, judged, tester, rng);
        std::map<std::string, int> clicked;
        for (const Event& e : sim.events)
          if (const auto* c = e.click()) clicked[c->doc_id] = 1;
        acc += ndcg_at_k(ranking, clicked, k);
      }
      out.per_query(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(qi)) =
          acc / replays;
    }
  }

  out.per_system.resize(systems.size());
  for (std::size_t s = 0; s < systems.size(); ++s)
    out.per_system[s] =
        out.per_query.row(static_cast<Eigen::Index>(s)).mean();
  return out;
}

void write_trec_run(const SystemRun& run, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  for (const auto& [q, ranking] : run.rankings) {
    for (std::size_t i = 0; i < ranking.size(); ++i) {
      const double score = static_cast<double>(ranking.size() - i);
      out << q << " Q0 " << ranking[i] << " " << (i + 1) << " " << score << " "
          << run.system_id << "\n";
    }
  }
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

SystemRun read_trec_run(const std::filesystem::path& path,
                        const std::string& system_id) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  struct Row {
    std::string doc;
    double score;
    long line;
  };
  std::map<std::string, std::vector<Row>> rows;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream is(line);
    std::string q, q0, doc, rank_s, score_s;
    if (!(is >> q >> q0 >> doc >> rank_s >> score_s))
      throw Error(ErrorCode::Parse, path.string() + " line " +
                                        std::to_string(line_no) +
                                        ": expected TREC run columns");
    double score;
    try {
      score = std::stod(score_s);
    } catch (...) {
      throw Error(ErrorCode::Parse, path.string() + " line " +
                                        std::to_string(line_no) +
                                        ": bad score '" + score_s + "'");
    }
    rows[q].push_back(Row{doc, score, line_no});
  }
  SystemRun run;
  run.system_id = system_id;
  for (auto& [q, rs] : rows) {
    std::sort(rs.begin(), rs.end(), [](const Row& a, const Row& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.doc < b.doc;
    });
    std::vector<std::string> ranking;
    ranking.reserve(rs.size());
    for (Row& r : rs) ranking.push_back(std::move(r.doc));
    run.rankings[q] = std::move(ranking);
  }
  return run;
}

}  // namespace simeval
