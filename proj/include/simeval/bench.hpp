#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "simeval/realism.hpp"
#include "simeval/reliability.hpp"
#include "simeval/testbed.hpp"

namespace simeval {

// Reads a YAML (or JSON) config file into JSON. Scalars are decoded as
// bool, integer, float, then string, in that order.
nlohmann::json load_config_file(const std::filesystem::path& path);
nlohmann::json yaml_to_json(const std::string& text);

// Deterministic shard assignment by session_id hash; stable across platforms
// and input order. Shard manifests inherit the parent manifest with adjusted
// counts.
std::vector<SessionCorpus> split_shards(const SessionCorpus& corpus,
                                        int n_shards);

struct JobContext {
  int workers = 1;
  bool dry_run = false;  // validate config and inputs, report the plan only
};

// Benchmark runners. Each takes a config object (already loaded from YAML or
// JSON), runs end to end, and returns a report:
//   { "benchmark_id", "provenance": {config, config_hash, tool_version,
//     schema_version, layout_id, seeds, generated_unix_ms}, "gates",
//     "results", "diagnostics" }
// generated_unix_ms is the only field allowed to differ between identical
// runs. Gate failures throw Error(GateNoQrels / GateNoSessionStructure).
nlohmann::json run_b1_job(const nlohmann::json& cfg, const JobContext& ctx = {});
nlohmann::json run_b2_job(const nlohmann::json& cfg, const JobContext& ctx = {});
nlohmann::json run_b3_job(const nlohmann::json& cfg, const JobContext& ctx = {});

void write_report(const nlohmann::json& report, const std::filesystem::path& path);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Flat table view of a report's main results (rows depend on benchmark_id).
Table report_table(const nlohmann::json& report);

// Writes CSV or TSV (by delimiter) preceded by "# key=value" provenance
// comment lines carrying the config hash.
void write_table(const Table& table, const std::filesystem::path& path,
                 char delimiter, const nlohmann::json& provenance);

// Human-readable one-screen summary of a report.
std::string summarize_report(const nlohmann::json& report);

}  // namespace simeval
