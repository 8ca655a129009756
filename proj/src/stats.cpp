#include "simeval/stats.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace simeval {

double js_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size())
    throw Error(ErrorCode::InvalidArgument, "histogram sizes differ");
  double sp = 0, sq = 0;
  for (double v : p) {
    if (v < 0) throw Error(ErrorCode::InvalidArgument, "negative mass");
    sp += v;
  }
  for (double v : q) {
    if (v < 0) throw Error(ErrorCode::InvalidArgument, "negative mass");
    sq += v;
  }
  if (sp <= 0 || sq <= 0)
    throw Error(ErrorCode::EmptyDistribution, "histogram with zero mass");
  double js = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = p[i] / sp, qi = q[i] / sq;
    const double mi = 0.5 * (pi + qi);
    if (pi > 0) js += 0.5 * pi * std::log2(pi / mi);
    if (qi > 0) js += 0.5 * qi * std::log2(qi / mi);
  }
  return std::clamp(js, 0.0, 1.0);
}

double wasserstein1(std::vector<double> xs, std::vector<double> ys) {
  if (xs.empty() || ys.empty())
    throw Error(ErrorCode::EmptyDistribution, "empty sample");
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  const double n = static_cast<double>(xs.size());
  const double m = static_cast<double>(ys.size());
  std::size_t i = 0, j = 0;
  double area = 0, prev = 0;
  bool started = false;
  while (i < xs.size() || j < ys.size()) {
    double v;
    if (i < xs.size() && j < ys.size())
      v = std::min(xs[i], ys[j]);
    else
      v = i < xs.size() ? xs[i] : ys[j];
    if (started) area += std::abs(i / n - j / m) * (v - prev);
    while (i < xs.size() && xs[i] == v) ++i;
    while (j < ys.size() && ys[j] == v) ++j;
    prev = v;
    started = true;
  }
  return area;
}

double ks_statistic(std::vector<double> xs, std::vector<double> ys) {
  if (xs.empty() || ys.empty())
    throw Error(ErrorCode::EmptyDistribution, "empty sample");
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  const double n = static_cast<double>(xs.size());
  const double m = static_cast<double>(ys.size());
  std::size_t i = 0, j = 0;
  double sup = 0;
  while (i < xs.size() || j < ys.size()) {
    double v;
    if (i < xs.size() && j < ys.size())
      v = std::min(xs[i], ys[j]);
    else
      v = i < xs.size() ? xs[i] : ys[j];
    while (i < xs.size() && xs[i] == v) ++i;
    while (j < ys.size() && ys[j] == v) ++j;
    sup = std::max(sup, std::abs(i / n - j / m));
  }
  return sup;
}

double normalized_levenshtein(std::string_view a, std::string_view b) {
  const std::size_t n = a.size(), m = b.size();
  if (n == 0 && m == 0) return 0.0;
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[m]) / static_cast<double>(std::max(n, m));
}

namespace {

std::vector<std::string_view> tokenize(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

double token_jaccard(std::string_view a, std::string_view b) {
  auto ta = tokenize(a);
  auto tb = tokenize(b);
  std::vector<std::string_view> sa(ta.begin(), ta.end());
  std::vector<std::string_view> sb(tb.begin(), tb.end());
  std::sort(sa.begin(), sa.end());
  sa.erase(std::unique(sa.begin(), sa.end()), sa.end());
  std::sort(sb.begin(), sb.end());
  sb.erase(std::unique(sb.begin(), sb.end()), sb.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  std::size_t i = 0, j = 0;
  while (i < sa.size() && j < sb.size()) {
    if (sa[i] == sb[j]) {
      ++inter;
      ++i;
      ++j;
    } else if (sa[i] < sb[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  const std::size_t uni = sa.size() + sb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::pair<std::vector<double>, std::vector<double>> unit_bin_histograms(
    const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty())
    throw Error(ErrorCode::EmptyDistribution, "empty sample for histogram");
  auto [amin, amax] = std::minmax_element(a.begin(), a.end());
  auto [bmin, bmax] = std::minmax_element(b.begin(), b.end());
  const std::int64_t lo = static_cast<std::int64_t>(
      std::llround(std::floor(std::min(*amin, *bmin))));
  const std::int64_t hi = static_cast<std::int64_t>(
      std::llround(std::floor(std::max(*amax, *bmax))));
  const std::size_t n_bins = static_cast<std::size_t>(hi - lo + 1);
  std::vector<double> ha(n_bins, 0.0), hb(n_bins, 0.0);
  for (double v : a) ha[static_cast<std::size_t>(std::llround(std::floor(v)) - lo)] += 1;
  for (double v : b) hb[static_cast<std::size_t>(std::llround(std::floor(v)) - lo)] += 1;
  return {std::move(ha), std::move(hb)};
}

std::pair<std::vector<double>, std::vector<double>> log_bin_histograms(
    const std::vector<double>& a, const std::vector<double>& b, int n_bins) {
  if (a.empty() || b.empty())
    throw Error(ErrorCode::EmptyDistribution, "empty sample for histogram");
  if (n_bins < 1) throw Error(ErrorCode::InvalidArgument, "n_bins < 1");
  double lo = std::numeric_limits<double>::infinity(), hi = 0;
  for (double v : a) {
    lo = std::min(lo, std::max(v, 1.0));
    hi = std::max(hi, v);
  }
  for (double v : b) {
    lo = std::min(lo, std::max(v, 1.0));
    hi = std::max(hi, v);
  }
  hi = std::max(hi, 1.0);
  std::vector<double> ha(n_bins, 0.0), hb(n_bins, 0.0);
  if (hi <= lo) {
    // Degenerate support: everything lands in the first bin.
    ha[0] = static_cast<double>(a.size());
    hb[0] = static_cast<double>(b.size());
    return {std::move(ha), std::move(hb)};
  }
  const double log_lo = std::log(lo), span = std::log(hi) - log_lo;
  auto bin_of = [&](double v) {
    v = std::max(v, 1.0);
    int k = static_cast<int>(std::floor((std::log(v) - log_lo) / span * n_bins));
    return std::clamp(k, 0, n_bins - 1);
  };
  for (double v : a) ha[bin_of(v)] += 1;
  for (double v : b) hb[bin_of(v)] += 1;
  return {std::move(ha), std::move(hb)};
}

MmdResult mmd2_rbf(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                   bool unbiased, std::optional<double> bandwidth) {
  const Eigen::Index n = X.rows(), m = Y.rows();
  if (n == 0 || m == 0) throw Error(ErrorCode::EmptyDistribution, "empty sample");
  if (X.cols() != Y.cols())
    throw Error(ErrorCode::InvalidArgument, "dimension mismatch");
  if (unbiased && (n < 2 || m < 2))
    throw Error(ErrorCode::InsufficientData,
                "unbiased estimator needs >= 2 points per side");

  const Eigen::Index N = n + m;
  Eigen::MatrixXd Z(N, X.cols());
  Z.topRows(n) = X;
  Z.bottomRows(m) = Y;
  const Eigen::VectorXd sq = Z.rowwise().squaredNorm();
  Eigen::MatrixXd D2 = -2.0 * (Z * Z.transpose());
  D2.colwise() += sq;
  D2.rowwise() += sq.transpose();
  D2 = D2.cwiseMax(0.0);

  MmdResult res;
  double sigma;
  if (bandwidth) {
    sigma = *bandwidth;
    if (sigma <= 0) throw Error(ErrorCode::InvalidArgument, "bandwidth <= 0");
  } else {
    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(N) * (N - 1) / 2);
    for (Eigen::Index i = 0; i < N; ++i)
      for (Eigen::Index j = i + 1; j < N; ++j)
        dists.push_back(std::sqrt(D2(i, j)));
    std::sort(dists.begin(), dists.end());
    const std::size_t k = dists.size();
    sigma = k % 2 ? dists[k / 2] : 0.5 * (dists[k / 2 - 1] + dists[k / 2]);
    if (sigma <= 0) {
      // All pooled points coincide; the clouds are identical.
      res.degenerate = true;
      return res;
    }
  }
  res.bandwidth = sigma;

  const double inv = -1.0 / (2.0 * sigma * sigma);
  const Eigen::MatrixXd K = (D2 * inv).array().exp().matrix();

  // Identical loop order in all three blocks keeps mmd2(X, X) exactly zero
  // for the biased estimator.
  double kxx = 0, kyy = 0, kxy = 0;
  if (unbiased) {
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j) kxx += K(i, j);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j)
        if (i != j) kyy += K(n + i, n + j);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < m; ++j) kxy += K(i, n + j);
    res.raw = kxx / (static_cast<double>(n) * (n - 1)) +
              kyy / (static_cast<double>(m) * (m - 1)) -
              2.0 * kxy / (static_cast<double>(n) * m);
    res.value = std::max(0.0, res.raw);
  } else {
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) kxx += K(i, j);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j) kyy += K(n + i, n + j);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < m; ++j) kxy += K(i, n + j);
    res.raw = kxx / (static_cast<double>(n) * n) +
              kyy / (static_cast<double>(m) * m) -
              2.0 * kxy / (static_cast<double>(n) * m);
    res.value = res.raw;
  }
  return res;
}

FrechetResult frechet_gaussian_distance(const Eigen::MatrixXd& X,
                                        const Eigen::MatrixXd& Y) {
  const Eigen::Index n = X.rows(), m = Y.rows(), d = X.cols();
  if (n < 2 || m < 2)
    throw Error(ErrorCode::InsufficientData, "need >= 2 points per side");
  if (Y.cols() != d) throw Error(ErrorCode::InvalidArgument, "dimension mismatch");

  FrechetResult res;
  res.high_variance = n <= d || m <= d;

  const Eigen::RowVectorXd mx = X.colwise().mean();
  const Eigen::RowVectorXd my = Y.colwise().mean();
  const Eigen::MatrixXd Xc = X.rowwise() - mx;
  const Eigen::MatrixXd Yc = Y.rowwise() - my;
  const Eigen::MatrixXd Sx = Xc.transpose() * Xc / static_cast<double>(n - 1);
  const Eigen::MatrixXd Sy = Yc.transpose() * Yc / static_cast<double>(m - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Sx);
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < 0) {
      res.clamp_magnitude += -ev[i];
      ev[i] = 0;
    }
  }
  const Eigen::MatrixXd A = es.eigenvectors() *
                            ev.cwiseSqrt().asDiagonal() *
                            es.eigenvectors().transpose();

  Eigen::MatrixXd M = A * Sy * A;
  M = 0.5 * (M + M.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2(M);
  double tr_sqrt = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double lam = es2.eigenvalues()[i];
    if (lam < 0)
      res.clamp_magnitude += -lam;
    else
      tr_sqrt += std::sqrt(lam);
  }

  const double dmu = (mx - my).squaredNorm();
  res.value = std::max(0.0, dmu + Sx.trace() + Sy.trace() - 2.0 * tr_sqrt);
  return res;
}

double pearson_r(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error(ErrorCode::InvalidArgument, "length mismatch");
  const std::size_t n = a.size();
  if (n < 2) throw Error(ErrorCode::InsufficientData, "need >= 2 points");
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0 || sbb <= 0)
    throw Error(ErrorCode::ConstantVector, "constant input vector");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

namespace {

// Continued fraction for the incomplete beta function (Lentz).
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-14;
  constexpr double kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int it = 1; it <= kMaxIter; ++it) {
    const int m2 = 2 * it;
    double aa = it * (b - it) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + it) * (qab + it) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta_reg(double a, double b, double x) {
  if (a <= 0 || b <= 0)
    throw Error(ErrorCode::InvalidArgument, "beta parameters must be positive");
  if (x <= 0) return 0.0;
  if (x >= 1) return 1.0;
  const double bt = std::exp(std::lgamma(a + b) - std::lgamma(a) -
                             std::lgamma(b) + a * std::log(x) +
                             b * std::log(1.0 - x));
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

double pearson_p_two_sided(double r, int n) {
  if (n < 3) throw Error(ErrorCode::InsufficientData, "need n >= 3 for p-value");
  if (!std::isfinite(r) || r < -1.0 || r > 1.0)
    throw Error(ErrorCode::InvalidArgument, "r outside [-1,1]");
  const double df = n - 2;
  const double one_minus_r2 = (1.0 - r) * (1.0 + r);
  if (one_minus_r2 <= 0) return 0.0;
  const double t2 = r * r * df / one_minus_r2;
  // Two-sided: P(|T| > t) = I_{df/(df+t^2)}(df/2, 1/2).
  return std::clamp(incomplete_beta_reg(df / 2.0, 0.5, df / (df + t2)), 0.0, 1.0);
}

}  // namespace simeval
