#include "simeval/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "simeval/error.hpp"
#include "simeval/ingest.hpp"
#include "simeval/parallel.hpp"
#include "simeval/rng.hpp"
#include "simeval/simulate.hpp"
#include "simeval/stats.hpp"

namespace simeval {

using nlohmann::json;

namespace {

json yaml_node_to_json(const YAML::Node& n) {
  switch (n.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Scalar: {
      if (n.Tag() == "!") return n.as<std::string>();  // quoted scalar
      {
        bool b;
        if (YAML::convert<bool>::decode(n, b)) return b;
      }
      const std::string& raw = n.Scalar();
      if (!raw.empty() && raw[0] != '-') {
        unsigned long long u;
        if (YAML::convert<unsigned long long>::decode(n, u))
          return static_cast<std::uint64_t>(u);
      } else {
        long long i;
        if (YAML::convert<long long>::decode(n, i))
          return static_cast<std::int64_t>(i);
      }
      {
        double d;
        if (YAML::convert<double>::decode(n, d)) return d;
      }
      return n.as<std::string>();
    }
    case YAML::NodeType::Sequence: {
      json a = json::array();
      for (const auto& e : n) a.push_back(yaml_node_to_json(e));
      return a;
    }
    case YAML::NodeType::Map: {
      json o = json::object();
      for (const auto& kv : n)
        o[kv.first.as<std::string>()] = yaml_node_to_json(kv.second);
      return o;
    }
  }
  return nullptr;
}

std::int64_t now_unix_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string fmt_num(double v) { return json(v).dump(); }

json make_provenance(const std::string& bench_id, const json& effective_cfg) {
  json p;
  p["tool_version"] = kToolVersion;
  p["schema_version"] = kSchemaVersion;
  p["benchmark_id"] = bench_id;
  p["config"] = effective_cfg;
  p["config_hash"] = config_hash(effective_cfg);
  p["generated_unix_ms"] = now_unix_ms();
  return p;
}

struct DatasetLoad {
  SessionCorpus corpus;
  std::optional<Qrels> qrels;  // present for generated graded data
  json echo;                   // normalized config node
};

DatasetLoad load_dataset(const json& node, std::uint64_t fallback_seed) {
  if (!node.is_object())
    throw Error(ErrorCode::Config, "dataset entry must be an object");
  DatasetLoad out;
  const std::uint64_t seed = node.value("seed", fallback_seed);
  if (node.contains("path")) {
    const std::string path = node.at("path").get<std::string>();
    out.corpus = read_jsonl(path, ReadMode::Strict);
    out.echo = json{{"path", path}};
  } else if (node.contains("synth")) {
    const SynthSpec spec = synth_spec_from_json(node.at("synth"));
    out.corpus = generate_synthetic_log(spec, seed);
    out.echo = json{{"synth", spec.to_json()}, {"seed", seed}};
  } else if (node.contains("synth_graded")) {
    const GradedSynthSpec spec = graded_synth_spec_from_json(node.at("synth_graded"));
    GradedSynthResult r = generate_graded_log(spec, seed);
    out.corpus = std::move(r.corpus);
    out.qrels = std::move(r.qrels);
    out.echo = json{{"synth_graded", spec.to_json()}, {"seed", seed}};
  } else {
    throw Error(ErrorCode::Config,
                "dataset entry needs one of: path, synth, synth_graded");
  }
  return out;
}

// Qrels from an explicit path, or inherited from a generated graded dataset.
Qrels resolve_qrels(const json& cfg, const DatasetLoad& data, json& echo_slot) {
  if (cfg.contains("qrels")) {
    const json& q = cfg.at("qrels");
    const std::string path = q.is_string() ? q.get<std::string>()
                                           : q.at("path").get<std::string>();
    echo_slot = json{{"path", path}};
    return parse_qrels(path);
  }
  if (data.qrels) {
    echo_slot = "generated";
    return *data.qrels;
  }
  echo_slot = nullptr;
  return {};
}

bool corpus_has_serps(const SessionCorpus& c) {
  for (const Session& s : c.sessions)
    for (const Event& e : s.events)
      if (e.type == EventType::SerpView) return true;
  return false;
}

struct TesterSpec {
  std::string id;
  SimulatorConfig cfg;
  json echo;
};

std::vector<TesterSpec> parse_simulators(const json& arr, const char* what) {
  if (!arr.is_array() || arr.empty())
    throw Error(ErrorCode::Config, std::string(what) + " must be a non-empty array");
  std::vector<TesterSpec> out;
  for (const json& e : arr) {
    TesterSpec t;
    t.cfg = simulator_config_from_json(e);
    t.id = e.value("id", t.cfg.simulator_id());
    if (t.id.empty() || t.id == "qrels")
      throw Error(ErrorCode::Config, "invalid tester id '" + t.id + "'");
    for (const TesterSpec& prev : out)
      if (prev.id == t.id)
        throw Error(ErrorCode::Config, "duplicate tester id '" + t.id +
                                           "'; set distinct 'id' fields");
    t.echo = t.cfg.to_json();
    t.echo["id"] = t.id;
    out.push_back(std::move(t));
  }
  return out;
}

bool needs_grades(SimulatorKind k) { return k != SimulatorKind::Heuristic; }

// Agreement statistic with a CONSTANT_SCORES escape hatch.
json guarded_stat(double (*stat)(std::span<const double>, std::span<const double>),
                  const std::vector<double>& a, const std::vector<double>& b) {
  try {
    return json{{"applicable", true}, {"value", stat(a, b)}};
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConstantVector)
      return json{{"applicable", false}, {"reason", "CONSTANT_SCORES"}};
    throw;
  }
}

json rate_to_json(const RateResult& r) {
  return json{{"weights", r.weights},
              {"consensus_ranking", r.consensus_ranking},
              {"iterations", r.iterations},
              {"converged", r.converged},
              {"constant_testers", r.constant_testers}};
}

json sensitivity_to_json(const SensitivityResult& r) {
  json entries = json::array();
  for (const SensitivityEntry& e : r.entries)
    entries.push_back(json{{"dropped_tester", e.dropped_tester},
                           {"top_system", e.top_system},
                           {"top_changed", e.top_changed}});
  return json{{"full_top_system", r.full_top_system},
              {"fragile", r.fragile},
              {"entries", entries}};
}

struct Agg {
  int n = 0;
  double sum = 0.0;
  double mn = std::numeric_limits<double>::infinity();
  double mx = -std::numeric_limits<double>::infinity();

  void add(double v) {
    ++n;
    sum += v;
    mn = std::min(mn, v);
    mx = std::max(mx, v);
  }
  json to_json() const {
    if (n == 0) return json{{"n", 0}};
    return json{{"n", n}, {"mean", sum / n}, {"min", mn}, {"max", mx}};
  }
};

void add_if_applicable(Agg& agg, const json& stat) {
  if (stat.is_object() && stat.value("applicable", false))
    agg.add(stat.at("value").get<double>());
}

std::vector<std::uint64_t> resolve_seeds(const json& cfg, std::uint64_t base,
                                         int default_count, const char* tag) {
  std::vector<std::uint64_t> seeds;
  if (cfg.contains("seeds")) {
    for (const json& s : cfg.at("seeds")) seeds.push_back(s.get<std::uint64_t>());
    if (seeds.empty()) throw Error(ErrorCode::Config, "seeds must be non-empty");
  } else {
    const int n = cfg.value("replicates", default_count);
    if (n < 1) throw Error(ErrorCode::Config, "replicates < 1");
    for (int i = 0; i < n; ++i)
      seeds.push_back(derive_seed(base, {tag, std::to_string(i)}));
  }
  return seeds;
}

}  // namespace

json yaml_to_json(const std::string& text) {
  try {
    return yaml_node_to_json(YAML::Load(text));
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::Parse, std::string("YAML: ") + e.what());
  }
}

json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  if (path.extension() == ".json") {
    try {
      return json::parse(buf.str());
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
    }
  }
  return yaml_to_json(buf.str());
}

std::vector<SessionCorpus> split_shards(const SessionCorpus& corpus,
                                        int n_shards) {
  if (n_shards < 1) throw Error(ErrorCode::Config, "n_shards < 1");
  std::vector<SessionCorpus> out(n_shards);
  for (const Session& s : corpus.sessions) {
    const std::size_t idx =
        derive_seed(0, {"shard", s.session_id}) % static_cast<std::uint64_t>(n_shards);
    out[idx].sessions.push_back(s);
  }
  for (SessionCorpus& sh : out) {
    sh.manifest = corpus.manifest;
    sh.manifest.dropped_sessions_by_reason.clear();
    sh.manifest.dropped_records_by_reason.clear();
    const auto n = static_cast<std::int64_t>(sh.sessions.size());
    std::int64_t events = 0;
    for (const Session& s : sh.sessions)
      events += static_cast<std::int64_t>(s.events.size());
    sh.manifest.input_record_count = n;
    sh.manifest.candidate_session_count = n;
    sh.manifest.emitted_session_count = n;
    sh.manifest.emitted_record_count = n;
    sh.manifest.emitted_event_count = events;
    sh.manifest.missingness = compute_missingness(sh.sessions);
  }
  return out;
}

json run_b1_job(const json& cfg, const JobContext& ctx) {
  const std::uint64_t seed = cfg.value("seed", std::uint64_t{0});
  if (!cfg.contains("dataset") || !cfg.at("dataset").is_object())
    throw Error(ErrorCode::Config, "b1 config needs a dataset object");
  const json& ds = cfg.at("dataset");
  if (!ds.contains("real"))
    throw Error(ErrorCode::Config, "dataset.real is required");

  DatasetLoad real = load_dataset(ds.at("real"), derive_seed(seed, {"data", "real"}));
  if (real.corpus.sessions.empty())
    throw Error(ErrorCode::InsufficientData, "real corpus is empty");

  json qrels_echo;
  const Qrels qrels = resolve_qrels(cfg, real, qrels_echo);
  const DocGrades grades = flatten_qrels(qrels);

  // Layout selection; external vectors must cover both corpora.
  const std::string layout = cfg.value("layout", std::string(kEmbedLayoutId));
  std::optional<ExternalEmbeddings> external;
  if (layout != kEmbedLayoutId) {
    const std::string prefix = "external:";
    if (layout.rfind(prefix, 0) != 0)
      throw Error(ErrorCode::Config, "layout must be '" +
                                         std::string(kEmbedLayoutId) +
                                         "' or 'external:<name>'");
    if (!cfg.contains("vectors"))
      throw Error(ErrorCode::Config, "external layout needs a vectors path");
    external = load_embedding_sidecar(cfg.at("vectors").get<std::string>(),
                                      layout.substr(prefix.size()));
  }

  struct Comparison {
    std::string id;
    SessionCorpus sim;
    json source;
  };
  std::vector<Comparison> comparisons;
  json gates = json::object();

  if (ds.contains("sim")) {
    Comparison c;
    DatasetLoad simd = load_dataset(ds.at("sim"), derive_seed(seed, {"data", "sim"}));
    c.sim = std::move(simd.corpus);
    c.id = "sim";
    for (const Session& s : c.sim.sessions)
      if (s.simulator_id) {
        c.id = *s.simulator_id;
        break;
      }
    c.source = simd.echo;
    comparisons.push_back(std::move(c));
  }

  std::vector<TesterSpec> sims;
  if (cfg.contains("simulators")) {
    sims = parse_simulators(cfg.at("simulators"), "simulators");
    if (!corpus_has_serps(real.corpus))
      throw Error(ErrorCode::GateNoSessionStructure,
                  "real corpus has no SERP_VIEW events; simulators cannot "
                  "replay sessions");
    gates["session_structure"] =
        "ok (" + std::to_string(real.corpus.sessions.size()) + " sessions)";
    bool any_graded = false;
    for (const TesterSpec& t : sims) any_graded = any_graded || needs_grades(t.cfg.kind);
    if (any_graded) {
      if (qrels.empty())
        throw Error(ErrorCode::GateNoQrels,
                    "relevance-based simulators configured but no qrels "
                    "available");
      gates["qrels"] = "ok (" + std::to_string(qrels.size()) + " queries)";
    } else {
      gates["qrels"] = "not_required";
    }
  }
  if (comparisons.empty() && sims.empty())
    throw Error(ErrorCode::Config, "nothing to compare: provide dataset.sim "
                                   "or a simulators list");

  json eff;
  eff["benchmark"] = "b1";
  eff["seed"] = seed;
  eff["layout"] = layout;
  eff["bootstrap_resamples"] = cfg.value("bootstrap_resamples", 1000);
  eff["embedding_resamples"] = cfg.value("embedding_resamples", -1);
  eff["classifier_folds"] = cfg.value("classifier_folds", 5);
  eff["leakage_auc"] = cfg.value("leakage_auc", 0.55);
  eff["with_bootstrap"] = cfg.value("with_bootstrap", true);
  eff["with_audit"] = cfg.value("with_audit", true);
  eff["dataset"] = json{{"real", real.echo}};
  if (!comparisons.empty()) eff["dataset"]["sim"] = comparisons.front().source;
  if (!sims.empty()) {
    json arr = json::array();
    for (const TesterSpec& t : sims) arr.push_back(t.echo);
    eff["simulators"] = arr;
  }
  if (!qrels_echo.is_null()) eff["qrels"] = qrels_echo;
  if (cfg.contains("vectors")) eff["vectors"] = cfg.at("vectors");

  json report;
  report["benchmark_id"] = "b1";
  report["provenance"] = make_provenance("b1", eff);
  report["provenance"]["layout_id"] =
      external ? external->layout_id : std::string(kEmbedLayoutId);
  report["provenance"]["dataset_version"] = real.corpus.manifest.dataset_version;
  report["gates"] = gates;

  if (ctx.dry_run) {
    json plan;
    plan["real_sessions"] = real.corpus.sessions.size();
    json ids = json::array();
    for (const Comparison& c : comparisons) ids.push_back(c.id);
    for (const TesterSpec& t : sims) ids.push_back(t.id);
    plan["comparisons"] = ids;
    report["dry_run"] = true;
    report["plan"] = plan;
    return report;
  }

  for (const TesterSpec& t : sims) {
    Comparison c;
    c.id = t.id;
    SimulatorConfig sc = t.cfg;
    sc.seed = derive_seed(seed, {"sim", t.id});
    c.sim = simulate_corpus(real.corpus, grades, sc);
    c.source = json{{"generated_by", t.id}};
    comparisons.push_back(std::move(c));
  }

  B1Options opt;
  opt.bootstrap_resamples = eff["bootstrap_resamples"].get<int>();
  opt.embedding_resamples = eff["embedding_resamples"].get<int>();
  opt.classifier_folds = eff["classifier_folds"].get<int>();
  opt.thresholds.leakage_auc = eff["leakage_auc"].get<double>();
  opt.with_bootstrap = eff["with_bootstrap"].get<bool>();
  opt.with_audit = eff["with_audit"].get<bool>();
  opt.workers = ctx.workers;
  opt.external = external;

  json results = json::object();
  json order = json::array();
  for (const Comparison& c : comparisons) {
    opt.seed = derive_seed(seed, {"b1", c.id});
    const RealismReport rep = run_b1(real.corpus, c.sim, opt);
    json rj = rep.to_json();
    rj["simulated_sessions"] = c.sim.sessions.size();
    rj["source"] = c.source;
    results[c.id] = std::move(rj);
    order.push_back(c.id);
  }
  report["results"] = json{{"comparisons", results}, {"order", order}};
  report["diagnostics"] =
      json{{"real_sessions", real.corpus.sessions.size()},
           {"real_dataset_id", real.corpus.manifest.dataset_id}};
  return report;
}

json run_b2_job(const json& cfg, const JobContext& ctx) {
  const std::uint64_t seed = cfg.value("seed", std::uint64_t{0});
  const std::vector<std::uint64_t> seeds = resolve_seeds(cfg, seed, 5, "b2rep");

  // Qrels can come from a file or a generated graded dataset.
  DatasetLoad data;
  if (cfg.contains("dataset"))
    data = load_dataset(cfg.at("dataset"), derive_seed(seed, {"data", "qrels"}));
  json qrels_echo;
  const Qrels qrels = resolve_qrels(cfg, data, qrels_echo);
  if (qrels.empty())
    throw Error(ErrorCode::GateNoQrels,
                "b2 needs graded relevance: give qrels.path or a "
                "dataset.synth_graded spec");

  const json tb_cfg = cfg.value("testbed", json::object());
  TestbedConfig tbc;
  tbc.n_queries = tb_cfg.value("n_queries", 100);
  tbc.pool_size = tb_cfg.value("pool_size", 100);
  tbc.pool_size_max = tb_cfg.value("pool_size_max", 0);

  const json panel_cfg = cfg.value("panel", json::object());
  const int n_systems = panel_cfg.value("n_systems", 10);
  const double alpha_lo = panel_cfg.value("alpha_lo", 0.1);
  const double alpha_hi = panel_cfg.value("alpha_hi", 0.9);

  const int replays = cfg.value("replays", 8);
  const int k = cfg.value("k", 10);
  const int resamples = cfg.value("bootstrap_resamples", 500);
  const bool with_bootstrap = cfg.value("with_bootstrap", true);
  const bool include_qrels_in_rate = cfg.value("include_qrels_in_rate", true);

  RateConfig rate_cfg;
  const json rate_j = cfg.value("rate", json::object());
  rate_cfg.max_iter = rate_j.value("max_iter", rate_cfg.max_iter);
  rate_cfg.tol = rate_j.value("tol", rate_cfg.tol);
  rate_cfg.weight_floor = rate_j.value("weight_floor", rate_cfg.weight_floor);
  rate_cfg.chance_z = rate_j.value("chance_z", rate_cfg.chance_z);

  std::vector<TesterSpec> testers;
  if (cfg.contains("testers")) {
    testers = parse_simulators(cfg.at("testers"), "testers");
  } else {
    for (const char* kind : {"pbm", "dbn"}) {
      TesterSpec t;
      t.cfg.kind = *simulator_kind_from_string(kind);
      t.id = kind;
      t.echo = t.cfg.to_json();
      t.echo["id"] = t.id;
      testers.push_back(std::move(t));
    }
    TesterSpec h;
    h.cfg.kind = SimulatorKind::Heuristic;
    h.cfg.heuristic.volume = HeuristicClickVolume::Geometric;
    h.id = "heuristic";
    h.echo = h.cfg.to_json();
    h.echo["id"] = h.id;
    testers.push_back(std::move(h));
  }

  json eff;
  eff["benchmark"] = "b2";
  eff["seed"] = seed;
  eff["seeds"] = seeds;
  if (!data.echo.is_null()) eff["dataset"] = data.echo;
  if (!qrels_echo.is_null()) eff["qrels"] = qrels_echo;
  eff["testbed"] = tbc.to_json();
  eff["panel"] = json{{"n_systems", n_systems},
                      {"alpha_lo", alpha_lo},
                      {"alpha_hi", alpha_hi}};
  eff["replays"] = replays;
  eff["k"] = k;
  eff["bootstrap_resamples"] = resamples;
  eff["with_bootstrap"] = with_bootstrap;
  eff["include_qrels_in_rate"] = include_qrels_in_rate;
  eff["rate"] = json{{"max_iter", rate_cfg.max_iter},
                     {"tol", rate_cfg.tol},
                     {"weight_floor", rate_cfg.weight_floor},
                     {"chance_z", rate_cfg.chance_z}};
  {
    json arr = json::array();
    for (const TesterSpec& t : testers) arr.push_back(t.echo);
    eff["testers"] = arr;
  }

  json report;
  report["benchmark_id"] = "b2";
  report["provenance"] = make_provenance("b2", eff);
  report["gates"] =
      json{{"qrels", "ok (" + std::to_string(qrels.size()) + " queries)"}};

  if (ctx.dry_run) {
    report["dry_run"] = true;
    report["plan"] = json{{"replicates", seeds.size()},
                          {"testers", testers.size()},
                          {"queries", tbc.n_queries},
                          {"systems", n_systems},
                          {"replays", replays}};
    return report;
  }

  std::vector<json> replicates(seeds.size());
  parallel_for(seeds.size(), ctx.workers, [&](std::size_t ri) {
    const std::uint64_t s = seeds[ri];
    TestbedConfig tc = tbc;
    tc.seed = derive_seed(s, {"testbed"});
    const Testbed tb = build_testbed(qrels, tc);
    const std::vector<SystemRun> panel =
        synthesize_system_panel(tb, n_systems, alpha_lo, alpha_hi,
                                derive_seed(s, {"panel"}));
    const TesterScores trusted = qrels_scores(tb, panel, k);

    json rep;
    rep["seed"] = s;
    std::map<std::string, std::vector<double>> rate_input;
    if (include_qrels_in_rate) rate_input["qrels"] = trusted.per_system;

    json tester_block = json::object();
    for (const TesterSpec& t : testers) {
      const TesterScores scores = click_derived_scores(
          tb, panel, t.cfg, replays, derive_seed(s, {"tester", t.id}), k);
      json tj;
      tj["tau"] = guarded_stat(kendall_tau, trusted.per_system, scores.per_system);
      tj["spearman"] =
          guarded_stat(spearman_rho, trusted.per_system, scores.per_system);
      tj["tau_ap"] = guarded_stat(tau_ap, trusted.per_system, scores.per_system);
      tj["concordance"] = guarded_stat(pairwise_concordance, trusted.per_system,
                                       scores.per_system);
      if (with_bootstrap && tj["tau"].value("applicable", false)) {
        try {
          const BootstrapCi ci =
              bootstrap_ci(kendall_tau, trusted.per_query, scores.per_query,
                           resamples, derive_seed(s, {"ci", t.id}));
          tj["tau_ci"] = json{{"lo", ci.lo},
                              {"hi", ci.hi},
                              {"dropped", ci.dropped},
                              {"unreliable", ci.unreliable}};
        } catch (const Error&) {
          tj["tau_ci"] = json{{"all_dropped", true}};
        }
      }
      tj["mean_score"] =
          std::accumulate(scores.per_system.begin(), scores.per_system.end(), 0.0) /
          scores.per_system.size();
      tester_block[t.id] = std::move(tj);
      rate_input[t.id] = scores.per_system;
    }
    rep["testers"] = std::move(tester_block);

    const RateResult rate = rate_aggregate(rate_input, trusted.system_ids, rate_cfg);
    rep["rate"] = rate_to_json(rate);
    if (rate_input.size() >= 3) {
      rep["sensitivity"] =
          sensitivity_to_json(leave_one_out(rate_input, trusted.system_ids, rate_cfg));
    } else {
      rep["sensitivity"] = json{{"skipped", "needs at least 3 testers"}};
    }
    replicates[ri] = std::move(rep);
  });

  // Aggregate across replicates.
  json aggregates;
  {
    std::map<std::string, Agg> tau, sp, tap, conc, weight;
    Agg iterations;
    bool all_converged = true;
    int fragile = 0, loo_runs = 0;
    for (const json& rep : replicates) {
      for (const TesterSpec& t : testers) {
        const json& tj = rep.at("testers").at(t.id);
        add_if_applicable(tau[t.id], tj.at("tau"));
        add_if_applicable(sp[t.id], tj.at("spearman"));
        add_if_applicable(tap[t.id], tj.at("tau_ap"));
        add_if_applicable(conc[t.id], tj.at("concordance"));
        weight[t.id].add(rep.at("rate").at("weights").at(t.id).get<double>());
      }
      iterations.add(rep.at("rate").at("iterations").get<double>());
      all_converged = all_converged && rep.at("rate").at("converged").get<bool>();
      if (rep.at("sensitivity").contains("fragile")) {
        ++loo_runs;
        if (rep.at("sensitivity").at("fragile").get<bool>()) ++fragile;
      }
    }
    json per_tester = json::object();
    for (const TesterSpec& t : testers)
      per_tester[t.id] = json{{"tau", tau[t.id].to_json()},
                              {"spearman", sp[t.id].to_json()},
                              {"tau_ap", tap[t.id].to_json()},
                              {"concordance", conc[t.id].to_json()},
                              {"rate_weight", weight[t.id].to_json()}};
    aggregates["testers"] = per_tester;
    aggregates["rate"] = json{{"iterations", iterations.to_json()},
                              {"all_converged", all_converged}};
    aggregates["sensitivity"] =
        json{{"fragile_replicates", fragile}, {"replicates_evaluated", loo_runs}};
  }

  report["results"] = json{{"replicates", replicates}, {"aggregates", aggregates}};
  report["diagnostics"] = json{{"eligible_queries", qrels.size()}};
  return report;
}

json run_b3_job(const json& cfg, const JobContext& ctx) {
  const std::uint64_t seed = cfg.value("seed", std::uint64_t{0});
  const std::vector<std::uint64_t> seeds = resolve_seeds(cfg, seed, 6, "b3rep");
  const int n_shards = cfg.value("shards", 2);
  if (n_shards < 1) throw Error(ErrorCode::Config, "shards < 1");

  const json ds_node = cfg.value("dataset", json{{"synth_graded", json::object()}});
  DatasetLoad data = load_dataset(ds_node, derive_seed(seed, {"data", "b3"}));
  if (data.corpus.sessions.empty())
    throw Error(ErrorCode::InsufficientData, "dataset is empty");
  if (!corpus_has_serps(data.corpus))
    throw Error(ErrorCode::GateNoSessionStructure,
                "dataset has no SERP_VIEW events; simulators cannot replay");
  json qrels_echo;
  const Qrels qrels = resolve_qrels(cfg, data, qrels_echo);
  if (qrels.empty())
    throw Error(ErrorCode::GateNoQrels, "b3 needs graded relevance for the "
                                        "reliability side");
  const DocGrades grades = flatten_qrels(qrels);

  std::vector<TesterSpec> sims;
  if (cfg.contains("simulators")) {
    sims = parse_simulators(cfg.at("simulators"), "simulators");
  } else {
    for (const char* kind : {"pbm", "dbn", "llm_sim"}) {
      TesterSpec t;
      t.cfg.kind = *simulator_kind_from_string(kind);
      t.id = kind;
      t.echo = t.cfg.to_json();
      t.echo["id"] = t.id;
      sims.push_back(std::move(t));
    }
    TesterSpec h;
    h.cfg.kind = SimulatorKind::Heuristic;
    h.cfg.heuristic.volume = HeuristicClickVolume::Geometric;
    h.id = "heuristic";
    h.echo = h.cfg.to_json();
    h.echo["id"] = h.id;
    sims.push_back(std::move(h));
  }
  for (const TesterSpec& t : sims)
    if (t.cfg.kind == SimulatorKind::Heuristic &&
        t.cfg.heuristic.volume == HeuristicClickVolume::CopyReal)
      throw Error(ErrorCode::Config,
                  "b3 simulators double as testbed testers; the heuristic "
                  "needs the geometric click volume");

  const json b1_cfg = cfg.value("b1", json::object());
  const bool b1_audit = b1_cfg.value("with_audit", false);
  const int b1_folds = b1_cfg.value("classifier_folds", 5);

  const json b2_cfg = cfg.value("b2", json::object());
  const json tb_cfg = b2_cfg.value("testbed", json::object());
  TestbedConfig tbc;
  tbc.n_queries = tb_cfg.value("n_queries", 40);
  tbc.pool_size = tb_cfg.value("pool_size", 30);
  tbc.pool_size_max = tb_cfg.value("pool_size_max", 0);
  const json panel_cfg = b2_cfg.value("panel", json::object());
  const int n_systems = panel_cfg.value("n_systems", 8);
  const double alpha_lo = panel_cfg.value("alpha_lo", 0.1);
  const double alpha_hi = panel_cfg.value("alpha_hi", 0.9);
  const int replays = b2_cfg.value("replays", 4);
  const int k = b2_cfg.value("k", 10);

  json eff;
  eff["benchmark"] = "b3";
  eff["seed"] = seed;
  eff["seeds"] = seeds;
  eff["shards"] = n_shards;
  eff["dataset"] = data.echo;
  if (!qrels_echo.is_null()) eff["qrels"] = qrels_echo;
  {
    json arr = json::array();
    for (const TesterSpec& t : sims) arr.push_back(t.echo);
    eff["simulators"] = arr;
  }
  eff["b1"] = json{{"with_audit", b1_audit}, {"classifier_folds", b1_folds}};
  eff["b2"] = json{{"testbed", tbc.to_json()},
                   {"panel", json{{"n_systems", n_systems},
                                  {"alpha_lo", alpha_lo},
                                  {"alpha_hi", alpha_hi}}},
                   {"replays", replays},
                   {"k", k}};

  json report;
  report["benchmark_id"] = "b3";
  report["provenance"] = make_provenance("b3", eff);
  report["provenance"]["layout_id"] = kEmbedLayoutId;
  report["provenance"]["dataset_version"] = data.corpus.manifest.dataset_version;
  report["gates"] = json{
      {"qrels", "ok (" + std::to_string(qrels.size()) + " queries)"},
      {"session_structure",
       "ok (" + std::to_string(data.corpus.sessions.size()) + " sessions)"}};

  if (ctx.dry_run) {
    report["dry_run"] = true;
    report["plan"] =
        json{{"cells", n_shards * sims.size() * seeds.size()},
             {"shards", n_shards},
             {"simulators", sims.size()},
             {"seeds", seeds.size()}};
    return report;
  }

  const std::vector<SessionCorpus> shards = split_shards(data.corpus, n_shards);
  for (int i = 0; i < n_shards; ++i)
    if (shards[i].sessions.empty())
      throw Error(ErrorCode::InsufficientData,
                  "shard " + std::to_string(i) + " is empty; reduce shards");

  // One group per (shard, seed): shared testbed and panel, one cell per
  // simulator.
  struct Group {
    int shard;
    std::uint64_t seed;
  };
  std::vector<Group> groups;
  for (int sh = 0; sh < n_shards; ++sh)
    for (std::uint64_t s : seeds) groups.push_back(Group{sh, s});

  std::vector<std::vector<json>> group_cells(groups.size());
  parallel_for(groups.size(), ctx.workers, [&](std::size_t gi) {
    const auto [sh, s] = groups[gi];
    const SessionCorpus& shard = shards[sh];
    const std::string sh_tag = std::to_string(sh);

    TestbedConfig tc = tbc;
    tc.seed = derive_seed(s, {"b3tb", sh_tag});
    const Testbed tb = build_testbed(qrels, tc);
    const std::vector<SystemRun> panel = synthesize_system_panel(
        tb, n_systems, alpha_lo, alpha_hi, derive_seed(s, {"b3panel", sh_tag}));
    const TesterScores trusted = qrels_scores(tb, panel, k);

    std::vector<json>& cells = group_cells[gi];
    for (const TesterSpec& t : sims) {
      SimulatorConfig sc = t.cfg;
      sc.seed = derive_seed(s, {"b3sim", sh_tag, t.id});
      const SessionCorpus sim = simulate_corpus(shard, grades, sc);

      B1Options opt;
      opt.seed = derive_seed(s, {"b3b1", sh_tag, t.id});
      opt.with_bootstrap = false;
      opt.with_audit = b1_audit;
      opt.classifier_folds = b1_folds;
      opt.workers = 1;
      const RealismReport rep = run_b1(shard, sim, opt);

      json realism = json::object();
      for (const auto& [metric, entry] : rep.metrics)
        realism[metric] = entry.applicable ? json(entry.value) : json(nullptr);

      const TesterScores scores = click_derived_scores(
          tb, panel, sc, replays, derive_seed(s, {"b3tester", sh_tag, t.id}), k);
      const json tau =
          guarded_stat(kendall_tau, trusted.per_system, scores.per_system);

      json cell;
      cell["simulator"] = t.id;
      cell["shard"] = sh;
      cell["seed"] = s;
      cell["tau"] = tau.value("applicable", false) ? json(tau.at("value"))
                                                   : json(nullptr);
      cell["realism"] = std::move(realism);
      cells.push_back(std::move(cell));
    }
  });

  json cells = json::array();
  for (const auto& g : group_cells)
    for (const json& c : g) cells.push_back(c);

  // Correlate each realism metric with tau over the cells where both exist.
  std::vector<std::string> metric_names;
  for (const json& c : cells)
    for (const auto& [m, v] : c.at("realism").items())
      if (std::find(metric_names.begin(), metric_names.end(), m) ==
          metric_names.end())
        metric_names.push_back(m);
  std::sort(metric_names.begin(), metric_names.end());

  const auto correlate = [&](const std::vector<const json*>& subset) {
    json out = json::object();
    for (const std::string& m : metric_names) {
      std::vector<double> xs, ys;
      for (const json* c : subset) {
        const json& rv = c->at("realism").at(m);
        const json& tv = c->at("tau");
        if (rv.is_null() || tv.is_null()) continue;
        xs.push_back(rv.get<double>());
        ys.push_back(tv.get<double>());
      }
      if (xs.size() < 3) {
        out[m] = json{{"applicable", false},
                      {"reason", "INSUFFICIENT_CELLS"},
                      {"n", xs.size()}};
        continue;
      }
      try {
        const double r = pearson_r(xs, ys);
        out[m] = json{{"applicable", true},
                      {"r", r},
                      {"p", pearson_p_two_sided(r, static_cast<int>(xs.size()))},
                      {"n", xs.size()}};
      } catch (const Error& e) {
        if (e.code() != ErrorCode::ConstantVector) throw;
        out[m] = json{{"applicable", false},
                      {"reason", "CONSTANT_VALUES"},
                      {"n", xs.size()}};
      }
    }
    return out;
  };

  std::vector<const json*> all;
  for (const json& c : cells) all.push_back(&c);
  json per_shard = json::object();
  for (int sh = 0; sh < n_shards; ++sh) {
    std::vector<const json*> subset;
    for (const json& c : cells)
      if (c.at("shard").get<int>() == sh) subset.push_back(&c);
    per_shard[std::to_string(sh)] = correlate(subset);
  }

  report["results"] = json{{"cells", cells},
                           {"correlations", json{{"pooled", correlate(all)},
                                                 {"per_shard", per_shard}}}};
  json shard_sizes = json::array();
  for (const SessionCorpus& sh : shards) shard_sizes.push_back(sh.sessions.size());
  report["diagnostics"] = json{{"shard_sizes", shard_sizes},
                               {"total_cells", cells.size()}};
  return report;
}

void write_report(const json& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << report.dump(2) << "\n";
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

namespace {

std::string stat_cell(const json& stat, const char* field = "value") {
  if (!stat.is_object()) return "";
  if (!stat.value("applicable", false)) return "";
  return fmt_num(stat.at(field).get<double>());
}

}  // namespace

Table report_table(const json& report) {
  const std::string id = report.value("benchmark_id", "");
  Table t;
  if (id == "b1") {
    t.header = {"comparison", "metric", "applicable", "value",
                "ci_lo",      "ci_hi",  "reason"};
    const json& comps = report.at("results").at("comparisons");
    for (const json& cid : report.at("results").at("order")) {
      const std::string c = cid.get<std::string>();
      for (const auto& [m, e] : comps.at(c).at("metrics").items()) {
        std::vector<std::string> row{c, m};
        if (e.value("applicable", false)) {
          row.push_back("true");
          row.push_back(fmt_num(e.at("value").get<double>()));
          if (e.contains("ci")) {
            row.push_back(fmt_num(e.at("ci")[0].get<double>()));
            row.push_back(fmt_num(e.at("ci")[1].get<double>()));
          } else {
            row.push_back("");
            row.push_back("");
          }
          row.push_back("");
        } else {
          row.insert(row.end(), {"false", "", "", "", e.value("reason", "")});
        }
        t.rows.push_back(std::move(row));
      }
    }
  } else if (id == "b2") {
    t.header = {"seed",        "tester",      "tau",
                "spearman",    "tau_ap",      "concordance",
                "rate_weight", "rate_iterations", "fragile"};
    for (const json& rep : report.at("results").at("replicates")) {
      const std::string seed_s = rep.at("seed").dump();
      const std::string iters =
          std::to_string(rep.at("rate").at("iterations").get<int>());
      const std::string fragile =
          rep.at("sensitivity").contains("fragile")
              ? (rep.at("sensitivity").at("fragile").get<bool>() ? "true" : "false")
              : "";
      for (const auto& [tid, tj] : rep.at("testers").items()) {
        t.rows.push_back({seed_s, tid, stat_cell(tj.at("tau")),
                          stat_cell(tj.at("spearman")), stat_cell(tj.at("tau_ap")),
                          stat_cell(tj.at("concordance")),
                          fmt_num(rep.at("rate").at("weights").at(tid).get<double>()),
                          iters, fragile});
      }
    }
  } else if (id == "b3") {
    std::vector<std::string> metrics;
    const json& cells = report.at("results").at("cells");
    for (const json& c : cells)
      for (const auto& [m, v] : c.at("realism").items())
        if (std::find(metrics.begin(), metrics.end(), m) == metrics.end())
          metrics.push_back(m);
    std::sort(metrics.begin(), metrics.end());
    t.header = {"shard", "simulator", "seed", "tau"};
    t.header.insert(t.header.end(), metrics.begin(), metrics.end());
    for (const json& c : cells) {
      std::vector<std::string> row{
          std::to_string(c.at("shard").get<int>()),
          c.at("simulator").get<std::string>(), c.at("seed").dump(),
          c.at("tau").is_null() ? "" : fmt_num(c.at("tau").get<double>())};
      for (const std::string& m : metrics) {
        const json& v = c.at("realism").at(m);
        row.push_back(v.is_null() ? "" : fmt_num(v.get<double>()));
      }
      t.rows.push_back(std::move(row));
    }
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown benchmark_id '" + id + "'");
  }
  return t;
}

namespace {

std::string csv_escape(const std::string& field, char delim) {
  const bool quote = field.find_first_of(std::string{delim} + "\"\n\r") !=
                     std::string::npos;
  if (!quote) return field;
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

}  // namespace

void write_table(const Table& table, const std::filesystem::path& path,
                 char delimiter, const json& provenance) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  for (const char* key :
       {"benchmark_id", "config_hash", "tool_version", "schema_version"})
    if (provenance.contains(key))
      out << "# " << key << "=" << provenance.at(key).get<std::string>() << "\n";
  const auto emit_row = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << delimiter;
      out << csv_escape(row[i], delimiter);
    }
    out << "\n";
  };
  emit_row(table.header);
  for (const auto& row : table.rows) emit_row(row);
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

std::string summarize_report(const json& report) {
  std::ostringstream os;
  const std::string id = report.value("benchmark_id", "?");
  os << "benchmark " << id << "  config " << report.at("provenance").at("config_hash").get<std::string>().substr(0, 12) << "\n";
  if (report.value("dry_run", false)) {
    os << "dry run; plan: " << report.at("plan").dump() << "\n";
    return os.str();
  }
  if (id == "b1") {
    const json& comps = report.at("results").at("comparisons");
    for (const json& cid : report.at("results").at("order")) {
      const std::string c = cid.get<std::string>();
      const json& r = comps.at(c);
      os << "  " << c << ":";
      for (const char* m : {"frechet", "mmd2", "js_click_depth", "nlev"}) {
        const json& e = r.at("metrics").at(m);
        if (e.value("applicable", false))
          os << " " << m << "=" << fmt_num(e.at("value").get<double>());
      }
      if (r.contains("audit"))
        os << " audit=" << r.at("audit").at("verdict").get<std::string>();
      os << "\n";
    }
  } else if (id == "b2") {
    const json& agg = report.at("results").at("aggregates");
    for (const auto& [tid, tj] : agg.at("testers").items()) {
      const json& tau = tj.at("tau");
      os << "  " << tid << ": tau";
      if (tau.value("n", 0) > 0)
        os << " mean=" << fmt_num(tau.at("mean").get<double>()) << " ["
           << fmt_num(tau.at("min").get<double>()) << ", "
           << fmt_num(tau.at("max").get<double>()) << "]";
      else
        os << " n/a";
      const json& w = tj.at("rate_weight");
      if (w.value("n", 0) > 0)
        os << "  rate_weight mean=" << fmt_num(w.at("mean").get<double>());
      os << "\n";
    }
    const json& sens = agg.at("sensitivity");
    os << "  leave-one-out fragile in " << sens.at("fragile_replicates")
       << "/" << sens.at("replicates_evaluated") << " replicates\n";
  } else if (id == "b3") {
    const json& pooled = report.at("results").at("correlations").at("pooled");
    os << "  pooled realism-vs-tau correlations ("
       << report.at("diagnostics").at("total_cells") << " cells):\n";
    for (const auto& [m, e] : pooled.items()) {
      if (!e.value("applicable", false)) continue;
      os << "    " << m << ": r=" << fmt_num(e.at("r").get<double>())
         << " p=" << fmt_num(e.at("p").get<double>()) << " n=" << e.at("n")
         << "\n";
    }
  }
  return os.str();
}

}  // namespace simeval
