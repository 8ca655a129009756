#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "simeval/stats.hpp"

namespace simeval {

// Kendall tau-b. Errors with CONSTANT_VECTOR if either input is constant.
double kendall_tau(std::span<const double> a, std::span<const double> b);

// Spearman rank correlation with average ranks for ties.
double spearman_rho(std::span<const double> a, std::span<const double> b);

// Symmetrized top-weighted rank agreement in [-1, 1]; truth-direction and
// tester-direction scores are averaged.
double tau_ap(std::span<const double> truth, std::span<const double> tester);

// Fraction of item pairs ordered consistently. Pairs tied on both sides count
// 1, tied on exactly one side count 1/2, so identical vectors score 1.
double pairwise_concordance(std::span<const double> a, std::span<const double> b);

struct BootstrapCi {
  double lo = 0.0, hi = 0.0;
  int dropped = 0;        // degenerate resamples (e.g. constant vectors)
  bool unreliable = false;  // >10% dropped
};

// Percentile CI for an agreement statistic between two testers, resampling
// query columns with replacement. Matrices are systems x queries; per-system
// scores are recomputed as means over the resampled columns.
BootstrapCi bootstrap_ci(
    const std::function<double(std::span<const double>, std::span<const double>)>& stat,
    const Eigen::MatrixXd& a_by_query, const Eigen::MatrixXd& b_by_query,
    int resamples, std::uint64_t seed);

struct RateConfig {
  int max_iter = 10;
  double tol = 1e-6;
  double weight_floor = 0.01;
  // One-sided normal quantile for the chance floor (default: 1% level,
  // conservative enough that a four-tester panel keeps a ~5% family rate).
  double chance_z = 2.3263478740408408;
};

struct RateResult {
  std::map<std::string, double> weights;
  std::vector<double> consensus;             // aligned with system_ids
  std::vector<std::string> consensus_ranking;  // best system first
  int iterations = 0;
  bool converged = false;
  std::vector<std::string> constant_testers;  // flagged, pinned to the floor
};

// Reliability-weighted aggregation: testers are iteratively reweighted by
// their rank agreement with the weighted consensus of min-max-normalized
// scores.
RateResult rate_aggregate(
    const std::map<std::string, std::vector<double>>& tester_scores,
    const std::vector<std::string>& system_ids, const RateConfig& cfg = {});

struct SensitivityEntry {
  std::string dropped_tester;
  std::string top_system;
  bool top_changed = false;
};

struct SensitivityResult {
  std::string full_top_system;
  std::vector<SensitivityEntry> entries;
  bool fragile = false;  // some single removal changes the winner
};

SensitivityResult leave_one_out(
    const std::map<std::string, std::vector<double>>& tester_scores,
    const std::vector<std::string>& system_ids, const RateConfig& cfg = {});

}  // namespace simeval
