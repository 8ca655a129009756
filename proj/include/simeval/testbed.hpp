#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "simeval/ingest.hpp"
#include "simeval/simulate.hpp"

namespace simeval {

struct TestbedConfig {
  int n_queries = 100;
  int pool_size = 100;
  // When > pool_size, each query's target pool size is drawn uniformly from
  // [pool_size, pool_size_max].
  int pool_size_max = 0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

struct Testbed {
  std::vector<std::string> queries;  // sorted
  std::map<std::string, std::vector<std::string>> pools;
  Qrels qrels;  // restricted to the sampled queries
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static Testbed from_json(const nlohmann::json& j);
};

// Uniform query sample without replacement; pools are the judged documents
// plus synthetic zero-grade distractors up to the target size.
Testbed build_testbed(const Qrels& qrels, const TestbedConfig& cfg);

struct SystemRun {
  std::string system_id;
  double alpha = 0.0;  // weight on true relevance
  std::map<std::string, std::vector<std::string>> rankings;  // per query
};

// Ranks each pool by alpha * normalized grade + (1 - alpha) * Gaussian noise;
// the noise is a fixed function of (system_seed, query_id, doc_id).
SystemRun synthesize_system(const Testbed& tb, double alpha,
                            std::uint64_t system_seed,
                            const std::string& system_id,
                            double noise_scale = 1.0);

// Panel with alphas evenly spaced over [alpha_lo, alpha_hi].
std::vector<SystemRun> synthesize_system_panel(const Testbed& tb, int n_systems,
                                               double alpha_lo, double alpha_hi,
                                               std::uint64_t seed);

// Linear-gain nDCG with the ideal taken over the full grade map; 0 when the
// ideal DCG is 0.
double ndcg_at_k(const std::vector<std::string>& ranking,
                 const std::map<std::string, int>& grades, int k = 10);

struct TesterScores {
  std::string tester_id;
  std::vector<std::string> system_ids;
  std::vector<double> per_system;  // mean over queries
  Eigen::MatrixXd per_query;       // systems x queries
};

// Ground-truth scoring straight from the qrels.
TesterScores qrels_scores(const Testbed& tb, const std::vector<SystemRun>& systems,
                          int k = 10);

// Click-based scoring: each system's top-k is presented as a SERP to the
// simulated tester; its clicks become binary relevance and the system is
// scored by nDCG@k against them, averaged over replays.
TesterScores click_derived_scores(const Testbed& tb,
                                  const std::vector<SystemRun>& systems,
                                  const SimulatorConfig& tester, int replays,
                                  std::uint64_t seed, int k = 10);

// TREC run format adapters.
void write_trec_run(const SystemRun& run, const std::filesystem::path& path);
SystemRun read_trec_run(const std::filesystem::path& path,
                        const std::string& system_id);

}  // namespace simeval
