#include "simeval/reliability.hpp"

#include <algorithm>
#include <cmath>

#include "simeval/rng.hpp"

namespace simeval {

namespace {

bool is_constant(std::span<const double> v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] != v[0]) return false;
  return true;
}

void check_pair(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error(ErrorCode::InvalidArgument, "length mismatch");
  if (a.size() < 2)
    throw Error(ErrorCode::InsufficientData, "need >= 2 items");
  if (is_constant(a) || is_constant(b))
    throw Error(ErrorCode::ConstantVector, "constant score vector");
}

std::vector<double> average_ranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&v](std::size_t x, std::size_t y) { return v[x] < v[y]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

// Descending order with index tie-break; shared by the top-weighted metric.
std::vector<std::size_t> desc_order(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&v](std::size_t x, std::size_t y) {
    if (v[x] != v[y]) return v[x] > v[y];
    return x < y;
  });
  return order;
}

double tau_ap_directed(std::span<const double> truth,
                       std::span<const double> tester) {
  const std::size_t n = truth.size();
  const std::vector<std::size_t> t_order = desc_order(truth);
  std::vector<std::size_t> pos(n);
  {
    const std::vector<std::size_t> b_order = desc_order(tester);
    for (std::size_t p = 0; p < n; ++p) pos[b_order[p]] = p;
  }
  double sum = 0;
  for (std::size_t i = 1; i < n; ++i) {
    std::size_t above = 0;
    for (std::size_t j = 0; j < i; ++j)
      if (pos[t_order[j]] < pos[t_order[i]]) ++above;
    sum += static_cast<double>(above) / static_cast<double>(i);
  }
  const double p = sum / static_cast<double>(n - 1);
  return 2.0 * p - 1.0;
}

}  // namespace

double kendall_tau(std::span<const double> a, std::span<const double> b) {
  check_pair(a, b);
  const std::size_t n = a.size();
  double concordant = 0, discordant = 0, ties_a = 0, ties_b = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double da = a[i] - a[j], db = b[i] - b[j];
      if (da == 0 && db == 0) {
        ++ties_a;
        ++ties_b;
      } else if (da == 0) {
        ++ties_a;
      } else if (db == 0) {
        ++ties_b;
      } else if ((da > 0) == (db > 0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const double n0 = static_cast<double>(n) * (n - 1) / 2.0;
  const double denom = std::sqrt((n0 - ties_a) * (n0 - ties_b));
  if (denom <= 0)
    throw Error(ErrorCode::ConstantVector, "no untied pairs");
  return (concordant - discordant) / denom;
}

double spearman_rho(std::span<const double> a, std::span<const double> b) {
  check_pair(a, b);
  const std::vector<double> ra = average_ranks(a);
  const std::vector<double> rb = average_ranks(b);
  return pearson_r(ra, rb);
}

double tau_ap(std::span<const double> truth, std::span<const double> tester) {
  check_pair(truth, tester);
  return 0.5 * (tau_ap_directed(truth, tester) + tau_ap_directed(tester, truth));
}

double pairwise_concordance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error(ErrorCode::InvalidArgument, "length mismatch");
  if (a.size() < 2)
    throw Error(ErrorCode::InsufficientData, "need >= 2 items");
  const std::size_t n = a.size();
  double score = 0, pairs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double da = a[i] - a[j], db = b[i] - b[j];
      pairs += 1;
      if (da == 0 && db == 0)
        score += 1;            // agree that the pair is tied
      else if (da == 0 || db == 0)
        score += 0.5;          // one side cannot resolve the pair
      else if ((da > 0) == (db > 0))
        score += 1;
    }
  }
  return score / pairs;
}

namespace {

double local_percentile(const std::vector<double>& sorted, double q) {
  if (sorted.size() == 1) return sorted[0];
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - static_cast<double>(lo));
}

}  // namespace

BootstrapCi bootstrap_ci(
    const std::function<double(std::span<const double>, std::span<const double>)>& stat,
    const Eigen::MatrixXd& a_by_query, const Eigen::MatrixXd& b_by_query,
    int resamples, std::uint64_t seed) {
  if (a_by_query.rows() != b_by_query.rows() ||
      a_by_query.cols() != b_by_query.cols())
    throw Error(ErrorCode::InvalidArgument, "matrix shape mismatch");
  if (a_by_query.cols() < 1)
    throw Error(ErrorCode::InvalidArgument, "need at least one query column");
  if (resamples < 1)
    throw Error(ErrorCode::InvalidArgument, "resamples < 1");

  const Eigen::Index n_sys = a_by_query.rows();
  const std::size_t n_q = static_cast<std::size_t>(a_by_query.cols());

  BootstrapCi out;
  std::vector<double> values;
  values.reserve(resamples);
  for (int k = 0; k < resamples; ++k) {
    RngStream rng = RngStream::from(seed, {"relci", std::to_string(k)});
    std::vector<double> ma(n_sys, 0.0), mb(n_sys, 0.0);
    for (std::size_t c = 0; c < n_q; ++c) {
      const Eigen::Index col = static_cast<Eigen::Index>(rng.uniform_int(n_q));
      for (Eigen::Index s = 0; s < n_sys; ++s) {
        ma[s] += a_by_query(s, col);
        mb[s] += b_by_query(s, col);
      }
    }
    for (Eigen::Index s = 0; s < n_sys; ++s) {
      ma[s] /= static_cast<double>(n_q);
      mb[s] /= static_cast<double>(n_q);
    }
    try {
      values.push_back(stat(ma, mb));
    } catch (const Error&) {
      ++out.dropped;
    }
  }
  if (values.empty())
    throw Error(ErrorCode::ConstantVector, "all bootstrap resamples degenerate");
  std::sort(values.begin(), values.end());
  out.lo = local_percentile(values, 0.025);
  out.hi = local_percentile(values, 0.975);
  out.unreliable = out.dropped * 10 > resamples;
  return out;
}

namespace {

struct NormalizedTester {
  std::string id;
  std::vector<double> norm;
  bool constant = false;
};

std::vector<NormalizedTester> normalize_testers(
    const std::map<std::string, std::vector<double>>& tester_scores,
    std::size_t n_systems) {
  std::vector<NormalizedTester> out;
  for (const auto& [id, scores] : tester_scores) {
    if (scores.size() != n_systems)
      throw Error(ErrorCode::InvalidArgument,
                  "tester " + id + " score length mismatch");
    NormalizedTester t;
    t.id = id;
    const auto [mn, mx] = std::minmax_element(scores.begin(), scores.end());
    if (*mx - *mn <= 0) {
      t.constant = true;
      t.norm.assign(n_systems, 0.5);
    } else {
      t.norm.reserve(n_systems);
      for (double v : scores) t.norm.push_back((v - *mn) / (*mx - *mn));
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<double> weighted_consensus(const std::vector<NormalizedTester>& testers,
                                       const std::vector<double>& weights,
                                       std::size_t n_systems) {
  std::vector<double> consensus(n_systems, 0.0);
  double wsum = 0;
  for (std::size_t i = 0; i < testers.size(); ++i) {
    wsum += weights[i];
    for (std::size_t j = 0; j < n_systems; ++j)
      consensus[j] += weights[i] * testers[i].norm[j];
  }
  for (double& c : consensus) c /= wsum;
  return consensus;
}

}  // namespace

RateResult rate_aggregate(
    const std::map<std::string, std::vector<double>>& tester_scores,
    const std::vector<std::string>& system_ids, const RateConfig& cfg) {
  const std::size_t n_systems = system_ids.size();
  if (n_systems < 2)
    throw Error(ErrorCode::InsufficientData, "need >= 2 systems");
  if (tester_scores.empty())
    throw Error(ErrorCode::InsufficientData, "no testers");
  if (cfg.max_iter < 1 || cfg.tol <= 0 || cfg.weight_floor <= 0 ||
      cfg.chance_z <= 0)
    throw Error(ErrorCode::InvalidArgument, "bad RATE configuration");

  std::vector<NormalizedTester> testers =
      normalize_testers(tester_scores, n_systems);

  // Critical Kendall tau under the null of an unrelated ordering. Testers
  // whose agreement with the consensus cannot beat chance get the floor
  // outright instead of a small positive weight that would decay over many
  // rounds. The gate only engages when the panel is large enough that
  // strong-but-imperfect agreement can clear it (critical tau <= 0.8);
  // below that every honest tester would be floored and the relative
  // update does the job on its own.
  const double nd = static_cast<double>(n_systems);
  const double tau_crit =
      cfg.chance_z * std::sqrt(2.0 * (2.0 * nd + 5.0) / (9.0 * nd * (nd - 1.0)));
  const bool gate_chance = tau_crit <= 0.8;

  RateResult res;
  std::vector<double> weights(testers.size(), 1.0);
  std::vector<double> consensus;

  for (int it = 1; it <= cfg.max_iter; ++it) {
    res.iterations = it;
    consensus = weighted_consensus(testers, weights, n_systems);
    double delta = 0;
    std::vector<double> next(weights.size());
    for (std::size_t i = 0; i < testers.size(); ++i) {
      double w;
      if (testers[i].constant) {
        w = cfg.weight_floor;
      } else {
        double tau;
        try {
          tau = kendall_tau(testers[i].norm, consensus);
        } catch (const Error&) {
          tau = 0.0;  // consensus itself degenerate
        }
        w = (gate_chance && tau < tau_crit) ? cfg.weight_floor
                                            : std::max(tau, cfg.weight_floor);
      }
      next[i] = w;
      delta = std::max(delta, std::abs(w - weights[i]));
    }
    weights = std::move(next);
    if (delta < cfg.tol) {
      res.converged = true;
      // A pass that changed nothing at all only verifies the fixed point;
      // iterations counts the passes that moved the weights.
      if (delta == 0.0 && it > 1) res.iterations = it - 1;
      break;
    }
  }

  res.consensus = weighted_consensus(testers, weights, n_systems);
  for (std::size_t i = 0; i < testers.size(); ++i) {
    res.weights[testers[i].id] = weights[i];
    if (testers[i].constant) res.constant_testers.push_back(testers[i].id);
  }

  std::vector<std::size_t> order(n_systems);
  for (std::size_t i = 0; i < n_systems; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    if (res.consensus[x] != res.consensus[y])
      return res.consensus[x] > res.consensus[y];
    return system_ids[x] < system_ids[y];
  });
  for (std::size_t i : order) res.consensus_ranking.push_back(system_ids[i]);
  return res;
}

SensitivityResult leave_one_out(
    const std::map<std::string, std::vector<double>>& tester_scores,
    const std::vector<std::string>& system_ids, const RateConfig& cfg) {
  if (tester_scores.size() < 3)
    throw Error(ErrorCode::InsufficientData,
                "leave-one-out needs >= 3 testers");
  SensitivityResult out;
  out.full_top_system = rate_aggregate(tester_scores, system_ids, cfg)
                            .consensus_ranking.front();
  for (const auto& [id, scores] : tester_scores) {
    std::map<std::string, std::vector<double>> reduced = tester_scores;
    reduced.erase(id);
    SensitivityEntry e;
    e.dropped_tester = id;
    e.top_system =
        rate_aggregate(reduced, system_ids, cfg).consensus_ranking.front();
    e.top_changed = e.top_system != out.full_top_system;
    out.fragile = out.fragile || e.top_changed;
    out.entries.push_back(std::move(e));
  }
  return out;
}

}  // namespace simeval
