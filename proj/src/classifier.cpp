#include "simeval/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "simeval/rng.hpp"

namespace simeval {

const char* to_string(FeatureVariant v) {
  switch (v) {
    case FeatureVariant::Main: return "main";
    case FeatureVariant::MetadataOnly: return "metadata_only";
    case FeatureVariant::StructuralOnly: return "structural_only";
    case FeatureVariant::MaskedLength: return "masked_length";
    case FeatureVariant::Permutation: return "permutation";
  }
  return "unknown";
}

Eigen::MatrixXd feature_matrix(const SessionCorpus& corpus, FeatureVariant v) {
  if (v == FeatureVariant::MetadataOnly) {
    Eigen::MatrixXd X(corpus.sessions.size(), 4);
    for (std::size_t i = 0; i < corpus.sessions.size(); ++i) {
      const Session& s = corpus.sessions[i];
      bool any_dwell = false, any_conv = false, any_pad = false;
      for (const Event& e : s.events) {
        if (e.type == EventType::Dwell) any_dwell = true;
        if (e.type == EventType::ConvUser || e.type == EventType::ConvSystem)
          any_conv = true;
        if (const auto* serp = e.serp())
          for (const SerpResult& r : serp->results)
            if (r.doc_id.rfind(kPadDocPrefix, 0) == 0) any_pad = true;
      }
      const Eigen::Index row = static_cast<Eigen::Index>(i);
      X(row, 0) = s.user_hash ? 1.0 : 0.0;
      X(row, 1) = any_dwell ? 1.0 : 0.0;
      X(row, 2) = any_conv ? 1.0 : 0.0;
      X(row, 3) = any_pad ? 1.0 : 0.0;
    }
    return X;
  }

  Eigen::MatrixXd full = embed_corpus(corpus);
  switch (v) {
    case FeatureVariant::Main:
    case FeatureVariant::Permutation:
      return full;
    case FeatureVariant::StructuralOnly:
      return full.leftCols(42);
    case FeatureVariant::MaskedLength: {
      // Drop log1p(event count) [42] and query count [45].
      Eigen::MatrixXd X(full.rows(), 44);
      X.leftCols(42) = full.leftCols(42);
      X.col(42) = full.col(43);
      X.col(43) = full.col(44);
      return X;
    }
    default:
      return full;
  }
}

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

double logreg_loss(const Eigen::MatrixXd& X, const std::vector<int>& y,
                   const Eigen::VectorXd& w, double l2) {
  const Eigen::Index n = X.rows();
  double loss = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = w[0] + X.row(i).dot(w.tail(X.cols()));
    // log(1+exp(z)) - y z, numerically stable
    loss += std::max(z, 0.0) - y[static_cast<std::size_t>(i)] * z +
            std::log1p(std::exp(-std::abs(z)));
  }
  loss += 0.5 * l2 * w.tail(X.cols()).squaredNorm();
  return loss;
}

Eigen::VectorXd logreg_gradient(const Eigen::MatrixXd& X,
                                const std::vector<int>& y,
                                const Eigen::VectorXd& w, double l2) {
  const Eigen::Index n = X.rows(), d = X.cols();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(d + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = w[0] + X.row(i).dot(w.tail(d));
    const double r = sigmoid(z) - y[static_cast<std::size_t>(i)];
    g[0] += r;
    g.tail(d) += r * X.row(i).transpose();
  }
  g.tail(d) += l2 * w.tail(d);  // intercept is unpenalized
  return g;
}

LogRegModel fit_logreg(const Eigen::MatrixXd& X, const std::vector<int>& y,
                       double l2, int max_iter, double tol) {
  const Eigen::Index n = X.rows(), d = X.cols();
  if (static_cast<std::size_t>(n) != y.size())
    throw Error(ErrorCode::InvalidArgument, "label count mismatch");

  LogRegModel model;
  model.w = Eigen::VectorXd::Zero(d + 1);
  double loss = logreg_loss(X, y, model.w, l2);

  for (int it = 0; it < max_iter; ++it) {
    model.iterations = it + 1;
    Eigen::VectorXd p(n), wdiag(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double z = model.w[0] + X.row(i).dot(model.w.tail(d));
      p[i] = sigmoid(z);
      wdiag[i] = std::max(p[i] * (1.0 - p[i]), 1e-10);
    }
    const Eigen::VectorXd g = logreg_gradient(X, y, model.w, l2);

    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(d + 1, d + 1);
    const Eigen::MatrixXd Xw = wdiag.asDiagonal() * X;
    H(0, 0) = wdiag.sum();
    H.block(0, 1, 1, d) = Xw.colwise().sum();
    H.block(1, 0, d, 1) = H.block(0, 1, 1, d).transpose();
    H.block(1, 1, d, d) = X.transpose() * Xw;
    for (Eigen::Index k = 1; k <= d; ++k) H(k, k) += l2;

    Eigen::VectorXd step = H.ldlt().solve(g);
    double scale = 1.0;
    Eigen::VectorXd w_new;
    double loss_new = 0;
    for (int half = 0; half < 30; ++half) {
      w_new = model.w - scale * step;
      loss_new = logreg_loss(X, y, w_new, l2);
      if (loss_new <= loss + 1e-12) break;
      scale *= 0.5;
    }
    const double delta = (w_new - model.w).cwiseAbs().maxCoeff();
    model.w = w_new;
    loss = loss_new;
    if (delta < tol) {
      model.converged = true;
      break;
    }
  }
  return model;
}

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw Error(ErrorCode::InvalidArgument, "score/label count mismatch");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int y : labels) n_pos += y ? 1 : 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw Error(ErrorCode::InsufficientData, "AUC needs both classes");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&scores](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  // Average ranks across ties, then the rank-sum statistic.
  double rank_sum_pos = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]]) rank_sum_pos += avg_rank;
    i = j + 1;
  }
  const double u = rank_sum_pos -
                   static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

namespace {

struct AuditPlan {
  std::vector<int> real_rows, sim_rows;  // balanced row subsets
  std::vector<int> labels;               // 0 = real, 1 = simulated
  std::vector<int> perm_labels;
  std::vector<int> fold_of;              // aligned with [real_rows; sim_rows]
  int n_per_class = 0;
  int folds = 0;
};

AuditPlan make_plan(std::size_t n_real, std::size_t n_sim, int folds,
                    std::uint64_t seed) {
  if (folds < 2) throw Error(ErrorCode::InvalidArgument, "folds < 2");
  const int n = static_cast<int>(std::min(n_real, n_sim));
  if (n < folds)
    throw Error(ErrorCode::InsufficientData,
                "need at least one session per class per fold");

  AuditPlan plan;
  plan.folds = folds;
  plan.n_per_class = n;

  // One shuffle drives both sides: when the corpora are index-paired, a
  // session and its simulated partner stay in the same fold. Splitting such
  // twins across folds lets duplicated features leak one-sided labels into
  // training and pushes out-of-fold AUC below chance.
  auto pick = [&](std::size_t total) {
    std::vector<int> idx(total);
    for (std::size_t i = 0; i < total; ++i) idx[i] = static_cast<int>(i);
    RngStream rng = RngStream::from(seed, {"clf", "balance"});
    rng.shuffle(idx);
    idx.resize(n);
    return idx;
  };
  plan.real_rows = pick(n_real);
  plan.sim_rows = pick(n_sim);

  plan.labels.assign(2 * n, 0);
  plan.fold_of.assign(2 * n, 0);
  for (int i = 0; i < n; ++i) {
    plan.fold_of[i] = i % folds;
    plan.fold_of[n + i] = i % folds;
    plan.labels[n + i] = 1;
  }
  plan.perm_labels = plan.labels;
  RngStream rng = RngStream::from(seed, {"clf", "perm"});
  rng.shuffle(plan.perm_labels);
  return plan;
}

CvResult evaluate_variant(const Eigen::MatrixXd& Xr, const Eigen::MatrixXd& Xs,
                          const AuditPlan& plan, bool permuted) {
  const int n = plan.n_per_class;
  const Eigen::Index d = Xr.cols();
  Eigen::MatrixXd X(2 * n, d);
  for (int i = 0; i < n; ++i) {
    X.row(i) = Xr.row(plan.real_rows[i]);
    X.row(n + i) = Xs.row(plan.sim_rows[i]);
  }
  const std::vector<int>& y = permuted ? plan.perm_labels : plan.labels;

  std::vector<double> oof_scores(2 * n, 0.0);
  CvResult res;
  res.n_per_class = n;

  for (int f = 0; f < plan.folds; ++f) {
    std::vector<int> train_rows, test_rows;
    for (int i = 0; i < 2 * n; ++i)
      (plan.fold_of[i] == f ? test_rows : train_rows).push_back(i);

    Eigen::MatrixXd Xtr(train_rows.size(), d);
    std::vector<int> ytr(train_rows.size());
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      Xtr.row(static_cast<Eigen::Index>(i)) = X.row(train_rows[i]);
      ytr[i] = y[train_rows[i]];
    }

    // Standardize with training-fold statistics only.
    Eigen::RowVectorXd mean = Xtr.colwise().mean();
    Eigen::RowVectorXd sd(d);
    for (Eigen::Index c = 0; c < d; ++c) {
      const double var =
          (Xtr.col(c).array() - mean[c]).square().sum() / Xtr.rows();
      sd[c] = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
    Eigen::MatrixXd Xtr_std =
        (Xtr.rowwise() - mean).array().rowwise() / sd.array();

    const LogRegModel model = fit_logreg(Xtr_std, ytr);

    std::vector<double> fold_scores;
    std::vector<int> fold_labels;
    for (int row : test_rows) {
      Eigen::RowVectorXd x = (X.row(row) - mean).array() / sd.array();
      const double z = model.w[0] + x.dot(model.w.tail(d).transpose());
      oof_scores[row] = z;
      fold_scores.push_back(z);
      fold_labels.push_back(y[row]);
    }
    // Permuted labels can leave a small fold single-class; the fold AUC is
    // undefined there. The pooled out-of-fold AUC below is always balanced.
    bool pos = false, neg = false;
    for (int l : fold_labels) (l ? pos : neg) = true;
    if (pos && neg) res.fold_aucs.push_back(roc_auc(fold_scores, fold_labels));
  }

  res.auc = roc_auc(oof_scores, y);
  return res;
}

}  // namespace

CvResult classifier_auc(const SessionCorpus& real, const SessionCorpus& sim,
                        FeatureVariant variant, int folds, std::uint64_t seed) {
  const AuditPlan plan =
      make_plan(real.sessions.size(), sim.sessions.size(), folds, seed);
  const Eigen::MatrixXd Xr = feature_matrix(real, variant);
  const Eigen::MatrixXd Xs = feature_matrix(sim, variant);
  return evaluate_variant(Xr, Xs, plan, variant == FeatureVariant::Permutation);
}

AuditResult run_audit(const SessionCorpus& real, const SessionCorpus& sim,
                      int folds, std::uint64_t seed, AuditThresholds thresholds) {
  const AuditPlan plan =
      make_plan(real.sessions.size(), sim.sessions.size(), folds, seed);

  AuditResult out;
  out.thresholds = thresholds;
  const FeatureVariant variants[] = {
      FeatureVariant::Main, FeatureVariant::MetadataOnly,
      FeatureVariant::StructuralOnly, FeatureVariant::MaskedLength,
      FeatureVariant::Permutation};
  for (FeatureVariant v : variants) {
    const Eigen::MatrixXd Xr = feature_matrix(real, v);
    const Eigen::MatrixXd Xs = feature_matrix(sim, v);
    out.by_variant[to_string(v)] =
        evaluate_variant(Xr, Xs, plan, v == FeatureVariant::Permutation);
  }

  const bool clean =
      out.auc(FeatureVariant::MetadataOnly) < thresholds.leakage_auc &&
      out.auc(FeatureVariant::Permutation) < thresholds.leakage_auc;
  out.verdict = clean ? "VALID" : "LEAKAGE_SUSPECTED";
  return out;
}

}  // namespace simeval
