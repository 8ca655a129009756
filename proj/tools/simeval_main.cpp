#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "simeval/bench.hpp"
#include "simeval/error.hpp"
#include "simeval/ingest.hpp"
#include "simeval/schema.hpp"
#include "simeval/simulate.hpp"

namespace {

using nlohmann::json;
using namespace simeval;

// Exit contract: 0 ok, 2 bad input data, 3 gate failure, 4 bad configuration,
// 5 I/O failure, 1 anything else.
int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::Validation:
    case ErrorCode::Parse:
    case ErrorCode::SchemaVersionUnsupported:
      return 2;
    case ErrorCode::GateNoQrels:
    case ErrorCode::GateNoSessionStructure:
      return 3;
    case ErrorCode::Config:
    case ErrorCode::InvalidArgument:
      return 4;
    case ErrorCode::Io:
      return 5;
    default:
      return 1;
  }
}

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("SIMEVAL_SEED");
  if (!s || !*s) return std::nullopt;
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos);
    if (s[pos] != '\0') throw std::invalid_argument(s);
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw Error(ErrorCode::Config, "SIMEVAL_SEED must be an unsigned integer");
  }
}

// Priority: --seed flag, then the config file, then SIMEVAL_SEED.
void apply_seed(json& cfg, const std::optional<std::uint64_t>& flag) {
  if (flag) {
    cfg["seed"] = *flag;
    return;
  }
  if (cfg.contains("seed")) return;
  if (const auto es = env_seed()) cfg["seed"] = *es;
}

bool has_serp_events(const SessionCorpus& c) {
  for (const Session& s : c.sessions)
    for (const Event& e : s.events)
      if (e.type == EventType::SerpView) return true;
  return false;
}

struct IngestArgs {
  std::string input, synth, synth_graded;
  std::string output, manifest, qrels_out;
  std::string dataset_id = "weblog", dataset_version = "unversioned";
  double timeout_minutes = 30.0;
  int min_session_events = 2;
  int serp_depth = 10;
  std::optional<std::uint64_t> seed;
  bool dry_run = false;
};

int run_ingest(const IngestArgs& a) {
  const int sources = (!a.input.empty()) + (!a.synth.empty()) +
                      (!a.synth_graded.empty());
  if (sources != 1)
    throw Error(ErrorCode::Config,
                "give exactly one of --input, --synth, --synth-graded");
  std::uint64_t seed = 0;
  if (a.seed)
    seed = *a.seed;
  else if (const auto es = env_seed())
    seed = *es;

  SessionCorpus corpus;
  std::optional<Qrels> qrels;
  if (!a.input.empty()) {
    SessionizeConfig cfg;
    cfg.dataset_id = a.dataset_id;
    cfg.dataset_version = a.dataset_version;
    cfg.timeout_minutes = a.timeout_minutes;
    cfg.min_session_events = a.min_session_events;
    cfg.synth_serp_depth = a.serp_depth;
    cfg.seed = seed;
    IngestResult r = ingest_weblog_tsv(a.input, cfg);
    corpus = std::move(r.corpus);
    for (const std::string& e : r.parse_errors) std::cerr << "warning: " << e << "\n";
  } else if (!a.synth.empty()) {
    corpus = generate_synthetic_log(synth_spec_from_json(load_config_file(a.synth)),
                                    seed);
  } else {
    GradedSynthResult r = generate_graded_log(
        graded_synth_spec_from_json(load_config_file(a.synth_graded)), seed);
    corpus = std::move(r.corpus);
    qrels = std::move(r.qrels);
  }

  if (a.dry_run) {
    std::cout << corpus.manifest.to_json().dump(2) << "\n";
    return 0;
  }
  if (a.output.empty()) throw Error(ErrorCode::Config, "--output is required");
  write_jsonl(corpus, a.output);
  const std::string manifest_path =
      a.manifest.empty() ? a.output + ".manifest.json" : a.manifest;
  write_manifest(corpus.manifest, manifest_path);
  if (qrels && !a.qrels_out.empty()) write_qrels(*qrels, a.qrels_out);

  const LossManifest& m = corpus.manifest;
  std::cout << "wrote " << m.emitted_session_count << " sessions ("
            << m.emitted_event_count << " events) to " << a.output << "\n"
            << "dropped " << m.dropped_total() << " sessions; manifest "
            << manifest_path << "\n";
  if (qrels && !a.qrels_out.empty())
    std::cout << "qrels (" << qrels->size() << " queries) " << a.qrels_out << "\n";
  return 0;
}

struct ValidateArgs {
  std::string input, manifest;
};

int run_validate(const ValidateArgs& a) {
  const SessionCorpus corpus = read_jsonl(a.input, ReadMode::Strict);
  std::int64_t events = 0;
  for (const Session& s : corpus.sessions)
    events += static_cast<std::int64_t>(s.events.size());
  std::cout << "OK: " << corpus.sessions.size() << " sessions, " << events
            << " events\n";
  if (!a.manifest.empty()) {
    const LossManifest m = read_manifest(a.manifest);
    std::int64_t dropped_records = 0;
    for (const auto& [r, n] : m.dropped_records_by_reason) dropped_records += n;
    if (m.input_record_count != m.emitted_record_count + dropped_records)
      throw Error(ErrorCode::Validation,
                  "manifest accounting identity violated: " +
                      std::to_string(m.input_record_count) + " != " +
                      std::to_string(m.emitted_record_count) + " + " +
                      std::to_string(dropped_records));
    if (m.emitted_session_count !=
        static_cast<std::int64_t>(corpus.sessions.size()))
      throw Error(ErrorCode::Validation,
                  "manifest session count " +
                      std::to_string(m.emitted_session_count) +
                      " does not match corpus " +
                      std::to_string(corpus.sessions.size()));
    std::cout << "manifest OK: accounting identity holds\n";
  }
  return 0;
}

struct SimulateArgs {
  std::string real, qrels, output, manifest, config;
  std::string simulator = "pbm";
  std::optional<std::uint64_t> seed;
  bool dry_run = false;
};

int run_simulate(const SimulateArgs& a) {
  SimulatorConfig cfg;
  if (!a.config.empty()) {
    cfg = simulator_config_from_json(load_config_file(a.config));
  } else {
    const auto kind = simulator_kind_from_string(a.simulator);
    if (!kind)
      throw Error(ErrorCode::Config, "unknown simulator '" + a.simulator + "'");
    cfg.kind = *kind;
    if (cfg.kind == SimulatorKind::Heuristic)
      cfg.heuristic.volume = HeuristicClickVolume::CopyReal;
  }
  if (a.seed)
    cfg.seed = *a.seed;
  else if (cfg.seed == 0)
    if (const auto es = env_seed()) cfg.seed = *es;
  cfg.validate();

  const SessionCorpus real = read_jsonl(a.real, ReadMode::Strict);
  if (real.sessions.empty())
    throw Error(ErrorCode::InsufficientData, "real corpus is empty");
  if (!has_serp_events(real))
    throw Error(ErrorCode::GateNoSessionStructure,
                "real corpus has no SERP_VIEW events; nothing to replay");

  DocGrades grades;
  if (!a.qrels.empty()) grades = flatten_qrels(parse_qrels(a.qrels));
  if (grades.empty() && cfg.kind != SimulatorKind::Heuristic)
    throw Error(ErrorCode::GateNoQrels,
                "simulator '" + cfg.simulator_id() +
                    "' needs relevance grades; pass --qrels");

  if (a.dry_run) {
    std::cout << "would simulate " << real.sessions.size() << " sessions with "
              << cfg.simulator_id() << " (config "
              << config_hash(cfg.to_json()).substr(0, 12) << ")\n";
    return 0;
  }
  if (a.output.empty()) throw Error(ErrorCode::Config, "--output is required");
  const SessionCorpus sim = simulate_corpus(real, grades, cfg);
  write_jsonl(sim, a.output);
  const std::string manifest_path =
      a.manifest.empty() ? a.output + ".manifest.json" : a.manifest;
  write_manifest(sim.manifest, manifest_path);
  std::cout << "wrote " << sim.sessions.size() << " simulated sessions to "
            << a.output << "\nmanifest " << manifest_path << "\n";
  return 0;
}

struct BenchArgs {
  std::string config, output, csv, tsv;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  bool dry_run = false;
};

int run_bench(const std::string& which, const BenchArgs& a) {
  json cfg = a.config.empty() ? json::object() : load_config_file(a.config);
  if (!cfg.is_object())
    throw Error(ErrorCode::Config, "config root must be a mapping");
  apply_seed(cfg, a.seed);
  if (a.workers < 1) throw Error(ErrorCode::Config, "--workers < 1");
  JobContext ctx;
  ctx.workers = a.workers;
  ctx.dry_run = a.dry_run;

  json report;
  if (which == "b1")
    report = run_b1_job(cfg, ctx);
  else if (which == "b2")
    report = run_b2_job(cfg, ctx);
  else
    report = run_b3_job(cfg, ctx);

  if (!a.output.empty()) write_report(report, a.output);
  if (!a.dry_run) {
    if (!a.csv.empty())
      write_table(report_table(report), a.csv, ',', report.at("provenance"));
    if (!a.tsv.empty())
      write_table(report_table(report), a.tsv, '\t', report.at("provenance"));
  }
  std::cout << summarize_report(report);
  return 0;
}

struct ReportArgs {
  std::string input, csv, tsv;
};

int run_report(const ReportArgs& a) {
  std::ifstream in(a.input);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + a.input);
  json report;
  try {
    in >> report;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, a.input + ": " + e.what());
  }
  if (!a.csv.empty())
    write_table(report_table(report), a.csv, ',', report.at("provenance"));
  if (!a.tsv.empty())
    write_table(report_table(report), a.tsv, '\t', report.at("provenance"));
  std::cout << summarize_report(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"search-session simulator evaluation"};
  app.require_subcommand(1);
  std::function<int()> action;

  IngestArgs ingest_args;
  CLI::App* ingest = app.add_subcommand(
      "ingest", "convert raw logs (or generate synthetic ones) into the "
                "canonical session format");
  ingest->add_option("--input", ingest_args.input, "tab-separated web log");
  ingest->add_option("--synth", ingest_args.synth, "synthetic log spec (YAML/JSON)");
  ingest->add_option("--synth-graded", ingest_args.synth_graded,
                     "graded synthetic log spec (YAML/JSON)");
  ingest->add_option("--output,-o", ingest_args.output, "canonical JSONL path");
  ingest->add_option("--manifest", ingest_args.manifest,
                     "manifest path (default <output>.manifest.json)");
  ingest->add_option("--qrels-out", ingest_args.qrels_out,
                     "qrels output for --synth-graded");
  ingest->add_option("--dataset-id", ingest_args.dataset_id, "dataset id");
  ingest->add_option("--dataset-version", ingest_args.dataset_version,
                     "dataset version string");
  ingest->add_option("--timeout-minutes", ingest_args.timeout_minutes,
                     "session inactivity timeout");
  ingest->add_option("--min-session-events", ingest_args.min_session_events,
                     "minimum query rows per session");
  ingest->add_option("--serp-depth", ingest_args.serp_depth,
                     "synthetic SERP padding depth");
  ingest->add_option("--seed", ingest_args.seed, "generator seed");
  ingest->add_flag("--dry-run", ingest_args.dry_run,
                   "print the manifest without writing files");
  ingest->callback([&] { action = [&] { return run_ingest(ingest_args); }; });

  ValidateArgs validate_args;
  CLI::App* validate = app.add_subcommand(
      "validate", "check a canonical JSONL corpus (and optionally its manifest)");
  validate->add_option("--input,-i", validate_args.input, "canonical JSONL path")
      ->required();
  validate->add_option("--manifest", validate_args.manifest,
                       "manifest to cross-check");
  validate->callback([&] { action = [&] { return run_validate(validate_args); }; });

  SimulateArgs simulate_args;
  CLI::App* simulate = app.add_subcommand(
      "simulate", "replay a real corpus through a user simulator");
  simulate->add_option("--real", simulate_args.real, "real corpus JSONL")
      ->required();
  simulate->add_option("--qrels", simulate_args.qrels, "TREC qrels file");
  simulate->add_option("--simulator", simulate_args.simulator,
                       "pbm | dbn | heuristic | llm_sim");
  simulate->add_option("--config", simulate_args.config,
                       "simulator config file (overrides --simulator)");
  simulate->add_option("--output,-o", simulate_args.output, "simulated JSONL");
  simulate->add_option("--manifest", simulate_args.manifest, "manifest path");
  simulate->add_option("--seed", simulate_args.seed, "simulation seed");
  simulate->add_flag("--dry-run", simulate_args.dry_run, "plan only");
  simulate->callback([&] { action = [&] { return run_simulate(simulate_args); }; });

  BenchArgs b1_args, b2_args, b3_args;
  const auto add_bench = [&](const char* name, const char* help, BenchArgs& args) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config,-c", args.config, "job config (YAML/JSON)");
    sub->add_option("--output,-o", args.output, "report JSON path");
    sub->add_option("--csv", args.csv, "flat results as CSV");
    sub->add_option("--tsv", args.tsv, "flat results as TSV");
    sub->add_option("--seed", args.seed, "seed override");
    sub->add_option("--workers", args.workers, "worker threads");
    sub->add_flag("--dry-run", args.dry_run, "validate config, print the plan");
    sub->callback([&args, name, &action] {
      action = [&args, name] { return run_bench(name, args); };
    });
    return sub;
  };
  add_bench("b1", "behavioral realism of simulated sessions", b1_args);
  add_bench("b2", "tester reliability on a synthetic system panel", b2_args);
  add_bench("b3", "realism-versus-reliability correlation", b3_args);

  ReportArgs report_args;
  CLI::App* report = app.add_subcommand(
      "report", "summarize an existing report and export tables");
  report->add_option("--input,-i", report_args.input, "report JSON")->required();
  report->add_option("--csv", report_args.csv, "CSV output");
  report->add_option("--tsv", report_args.tsv, "TSV output");
  report->callback([&] { action = [&] { return run_report(report_args); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 4;
  }

  try {
    return action ? action() : 0;
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.message() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
