#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "simeval/classifier.hpp"
#include "simeval/embed.hpp"
#include "simeval/schema.hpp"
#include "simeval/stats.hpp"

namespace simeval {

// Marginal behavioral features compared between corpora.
std::vector<double> click_depths(const SessionCorpus& c);
std::vector<double> session_lengths(const SessionCorpus& c);
std::vector<double> dwell_times(const SessionCorpus& c);

// Pooled 36-cell action-bigram distribution.
std::vector<double> bigram_distribution(const SessionCorpus& c);

// One char per event for edit-distance comparisons.
std::string event_type_string(const Session& s);

struct Pairing {
  // (real index, sim index) pairs, matched by the "#<simulator>" id suffix.
  std::vector<std::pair<int, int>> pairs;
  int unmatched_sim = 0;
};

Pairing build_pairing(const SessionCorpus& real, const SessionCorpus& sim);

// Per-session mean token-Jaccard between consecutive queries; sessions with
// fewer than two queries are excluded.
std::vector<double> reformulation_values(const SessionCorpus& c);

struct MetricEntry {
  bool applicable = true;
  double value = 0.0;
  bool has_ci = false;
  double ci_lo = 0.0, ci_hi = 0.0;
  int ci_dropped = 0;
  bool ci_unreliable = false;  // >10% of resamples degenerate
  std::string reason;          // set when not applicable

  nlohmann::json to_json() const;
};

struct B1Options {
  std::uint64_t seed = 0;
  int bootstrap_resamples = 1000;
  // Cap for the expensive embedding-metric resampling; -1 means use
  // bootstrap_resamples.
  int embedding_resamples = -1;
  int classifier_folds = 5;
  AuditThresholds thresholds;
  bool with_bootstrap = true;
  bool with_audit = true;
  int workers = 1;
  std::optional<ExternalEmbeddings> external;
};

struct RealismReport {
  std::string layout_id;
  std::map<std::string, MetricEntry> metrics;
  std::optional<AuditResult> audit;
  nlohmann::json diagnostics;

  nlohmann::json to_json() const;
};

// Full behavioral-realism comparison of a simulated corpus against its real
// reference: marginal distances, sequence metrics, embedding-space distances,
// and the discriminator audit with leakage gating.
RealismReport run_b1(const SessionCorpus& real, const SessionCorpus& sim,
                     const B1Options& opt = {});

}  // namespace simeval
