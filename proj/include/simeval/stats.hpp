#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "simeval/error.hpp"

namespace simeval {

// Jensen-Shannon divergence (base 2) between two histograms of equal length.
// Inputs are normalized internally; 0*log(0) terms contribute 0.
double js_divergence(std::span<const double> p, std::span<const double> q);

// 1-D Wasserstein-1 between two samples via their empirical CDFs.
double wasserstein1(std::vector<double> xs, std::vector<double> ys);

// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<double> xs, std::vector<double> ys);

// Levenshtein distance divided by max length; 0 for two empty strings.
double normalized_levenshtein(std::string_view a, std::string_view b);

// Jaccard similarity between whitespace token sets; 1 if both are empty.
double token_jaccard(std::string_view a, std::string_view b);

// Aligned histograms over shared support.
// Unit bins for integer-valued features: one bin per integer in the union
// support range.
std::pair<std::vector<double>, std::vector<double>> unit_bin_histograms(
    const std::vector<double>& a, const std::vector<double>& b);

// Log-spaced bins for heavy-tailed features (dwell). Values < 1 clamp into
// the first bin.
std::pair<std::vector<double>, std::vector<double>> log_bin_histograms(
    const std::vector<double>& a, const std::vector<double>& b, int n_bins = 50);

struct MmdResult {
  double value = 0.0;       // max(0, raw) for the unbiased estimator
  double raw = 0.0;
  double bandwidth = 0.0;   // RBF kernel width (median pairwise distance)
  bool degenerate = false;  // all pooled points identical
};

// Squared maximum mean discrepancy with an RBF kernel. Bandwidth defaults to
// the median pairwise Euclidean distance over the pooled rows.
MmdResult mmd2_rbf(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                   bool unbiased = true,
                   std::optional<double> bandwidth = std::nullopt);

struct FrechetResult {
  double value = 0.0;
  double clamp_magnitude = 0.0;  // total |negative eigenvalue| mass clamped
  bool high_variance = false;    // sample count close to dimension
};

// Gaussian-approximation distance between two point clouds:
//   |mu_x - mu_y|^2 + tr(Sx + Sy - 2 (Sx^1/2 Sy Sx^1/2)^1/2)
// with ddof=1 covariances and symmetric eigendecompositions.
FrechetResult frechet_gaussian_distance(const Eigen::MatrixXd& X,
                                        const Eigen::MatrixXd& Y);

// Pearson, with CONSTANT_VECTOR error on zero variance.
double pearson_r(std::span<const double> a, std::span<const double> b);

// Two-sided p-value for a Pearson correlation under the t distribution,
// computed through the regularized incomplete beta function.
double pearson_p_two_sided(double r, int n);

double incomplete_beta_reg(double a, double b, double x);

}  // namespace simeval
