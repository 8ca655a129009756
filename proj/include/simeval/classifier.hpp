#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "simeval/embed.hpp"
#include "simeval/schema.hpp"

namespace simeval {

// Feature views used by the real-vs-simulated discriminator audit.
enum class FeatureVariant {
  Main,            // full 46-dim embedding
  MetadataOnly,    // presence indicators only; must NOT separate the classes
  StructuralOnly,  // behavior features without the summary block
  MaskedLength,    // full minus length-correlated dimensions
  Permutation,     // full features, shuffled labels
};

const char* to_string(FeatureVariant v);

Eigen::MatrixXd feature_matrix(const SessionCorpus& corpus, FeatureVariant v);

struct LogRegModel {
  Eigen::VectorXd w;  // first coefficient is the unpenalized intercept
  int iterations = 0;
  bool converged = false;
};

// L2-regularized logistic regression via damped Newton steps. X excludes the
// intercept column; labels are 0/1.
LogRegModel fit_logreg(const Eigen::MatrixXd& X, const std::vector<int>& y,
                       double l2 = 1.0, int max_iter = 200, double tol = 1e-8);

// Objective gradient at w (intercept first), for finite-difference checks.
Eigen::VectorXd logreg_gradient(const Eigen::MatrixXd& X,
                                const std::vector<int>& y,
                                const Eigen::VectorXd& w, double l2 = 1.0);
double logreg_loss(const Eigen::MatrixXd& X, const std::vector<int>& y,
                   const Eigen::VectorXd& w, double l2 = 1.0);

// Rank-based AUC; ties contribute half weight.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct CvResult {
  double auc = 0.0;               // pooled over out-of-fold scores
  std::vector<double> fold_aucs;
  int n_per_class = 0;            // after balancing
};

// Balanced (downsampled), stratified, k-fold cross-validated AUC of a
// real-vs-simulated logistic regression on the chosen feature view.
// Standardization parameters are fit on training folds only.
CvResult classifier_auc(const SessionCorpus& real, const SessionCorpus& sim,
                        FeatureVariant variant, int folds, std::uint64_t seed);

struct AuditThresholds {
  double leakage_auc = 0.55;
};

struct AuditResult {
  std::map<std::string, CvResult> by_variant;  // keyed by variant name
  std::string verdict;                         // VALID or LEAKAGE_SUSPECTED
  AuditThresholds thresholds;

  double auc(FeatureVariant v) const { return by_variant.at(to_string(v)).auc; }
};

// Runs all five variants on shared balanced folds and applies the leakage
// verdict: VALID iff metadata and permutation AUCs both stay below the
// threshold.
AuditResult run_audit(const SessionCorpus& real, const SessionCorpus& sim,
                      int folds = 5, std::uint64_t seed = 0,
                      AuditThresholds thresholds = {});

}  // namespace simeval
