#include "simeval/realism.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <unordered_map>

#include "simeval/parallel.hpp"
#include "simeval/rng.hpp"
#include "simeval/simulate.hpp"

namespace simeval {

using nlohmann::json;

std::vector<double> click_depths(const SessionCorpus& c) {
  std::vector<double> out;
  for (const Session& s : c.sessions)
    for (const Event& e : s.events)
      if (const auto* cl = e.click()) out.push_back(cl->rank);
  return out;
}

std::vector<double> session_lengths(const SessionCorpus& c) {
  std::vector<double> out;
  out.reserve(c.sessions.size());
  for (const Session& s : c.sessions)
    out.push_back(static_cast<double>(s.events.size()));
  return out;
}

std::vector<double> dwell_times(const SessionCorpus& c) {
  std::vector<double> out;
  for (const Session& s : c.sessions)
    for (const Event& e : s.events)
      if (const auto* d = e.dwell())
        out.push_back(static_cast<double>(d->dwell_ms));
  return out;
}

namespace {

std::vector<double> session_bigram_counts(const Session& s) {
  std::vector<double> counts(kEventTypeCount * kEventTypeCount, 0.0);
  for (std::size_t i = 0; i + 1 < s.events.size(); ++i) {
    const int a = static_cast<int>(s.events[i].type);
    const int b = static_cast<int>(s.events[i + 1].type);
    counts[a * kEventTypeCount + b] += 1;
  }
  return counts;
}

}  // namespace

std::vector<double> bigram_distribution(const SessionCorpus& c) {
  std::vector<double> counts(kEventTypeCount * kEventTypeCount, 0.0);
  for (const Session& s : c.sessions) {
    const std::vector<double> sc = session_bigram_counts(s);
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += sc[i];
  }
  return counts;
}

std::string event_type_string(const Session& s) {
  static const char chars[kEventTypeCount + 1] = "QSCDUV";
  std::string out;
  out.reserve(s.events.size());
  for (const Event& e : s.events) out.push_back(chars[static_cast<int>(e.type)]);
  return out;
}

Pairing build_pairing(const SessionCorpus& real, const SessionCorpus& sim) {
  std::unordered_map<std::string, int> real_idx;
  for (std::size_t i = 0; i < real.sessions.size(); ++i)
    real_idx[real.sessions[i].session_id] = static_cast<int>(i);
  Pairing p;
  for (std::size_t j = 0; j < sim.sessions.size(); ++j) {
    const auto parent = real_id_of_simulated(sim.sessions[j].session_id);
    if (parent) {
      auto it = real_idx.find(*parent);
      if (it != real_idx.end()) {
        p.pairs.emplace_back(it->second, static_cast<int>(j));
        continue;
      }
    }
    ++p.unmatched_sim;
  }
  return p;
}

std::vector<double> reformulation_values(const SessionCorpus& c) {
  std::vector<double> out;
  for (const Session& s : c.sessions) {
    std::vector<const std::string*> queries;
    for (const Event& e : s.events)
      if (const auto* q = e.query()) queries.push_back(&q->query_text);
    if (queries.size() < 2) continue;
    double sum = 0;
    for (std::size_t i = 0; i + 1 < queries.size(); ++i)
      sum += token_jaccard(*queries[i], *queries[i + 1]);
    out.push_back(sum / static_cast<double>(queries.size() - 1));
  }
  return out;
}

json MetricEntry::to_json() const {
  json j;
  j["applicable"] = applicable;
  if (applicable) {
    j["value"] = value;
    if (has_ci) {
      j["ci"] = {ci_lo, ci_hi};
      j["ci_dropped_resamples"] = ci_dropped;
      j["ci_unreliable"] = ci_unreliable;
    }
  } else {
    j["reason"] = reason;
  }
  return j;
}

json RealismReport::to_json() const {
  json j;
  j["layout_id"] = layout_id;
  json m = json::object();
  for (const auto& [id, entry] : metrics) m[id] = entry.to_json();
  j["metrics"] = m;
  if (audit) {
    json a;
    a["verdict"] = audit->verdict;
    a["thresholds"] = {{"leakage_auc", audit->thresholds.leakage_auc}};
    json variants = json::object();
    for (const auto& [name, cv] : audit->by_variant)
      variants[name] = {{"auc", cv.auc},
                        {"fold_aucs", cv.fold_aucs},
                        {"n_per_class", cv.n_per_class}};
    a["variants"] = variants;
    j["audit"] = a;
  }
  j["diagnostics"] = diagnostics;
  return j;
}

namespace {

template <typename T>
std::vector<T> resample_vec(const std::vector<T>& v, RngStream& rng) {
  std::vector<T> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(v[rng.uniform_int(v.size())]);
  return out;
}

std::vector<int> resample_indices(std::size_t n, RngStream& rng) {
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = static_cast<int>(rng.uniform_int(n));
  return out;
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& X, const std::vector<int>& idx) {
  Eigen::MatrixXd out(idx.size(), X.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = X.row(idx[i]);
  return out;
}

double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  if (sorted.size() == 1) return sorted[0];
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

RealismReport run_b1(const SessionCorpus& real, const SessionCorpus& sim,
                     const B1Options& opt) {
  if (real.sessions.empty() || sim.sessions.empty())
    throw Error(ErrorCode::EmptyDistribution,
                "both corpora must be non-empty for realism comparison");

  RealismReport rep;
  rep.diagnostics = json::object();

  const std::vector<double> depths_r = click_depths(real);
  const std::vector<double> depths_s = click_depths(sim);
  const std::vector<double> lengths_r = session_lengths(real);
  const std::vector<double> lengths_s = session_lengths(sim);
  const std::vector<double> dwells_r = dwell_times(real);
  const std::vector<double> dwells_s = dwell_times(sim);
  const std::vector<double> reform_r = reformulation_values(real);
  const std::vector<double> reform_s = reformulation_values(sim);
  const Pairing pairing = build_pairing(real, sim);

  std::vector<std::vector<double>> bigrams_r, bigrams_s;
  bigrams_r.reserve(real.sessions.size());
  for (const Session& s : real.sessions)
    bigrams_r.push_back(session_bigram_counts(s));
  bigrams_s.reserve(sim.sessions.size());
  for (const Session& s : sim.sessions)
    bigrams_s.push_back(session_bigram_counts(s));

  std::vector<std::string> strings_r, strings_s;
  for (const Session& s : real.sessions) strings_r.push_back(event_type_string(s));
  for (const Session& s : sim.sessions) strings_s.push_back(event_type_string(s));

  Eigen::MatrixXd Xr, Xs;
  if (opt.external) {
    rep.layout_id = opt.external->layout_id;
    Xr = embed_corpus_external(real, *opt.external);
    Xs = embed_corpus_external(sim, *opt.external);
  } else {
    rep.layout_id = kEmbedLayoutId;
    Xr = embed_corpus(real);
    Xs = embed_corpus(sim);
  }

  auto inapplicable = [&rep](const std::string& id, const std::string& reason) {
    MetricEntry e;
    e.applicable = false;
    e.reason = reason;
    rep.metrics[id] = e;
  };
  auto set_value = [&rep](const std::string& id, double v) {
    MetricEntry e;
    e.value = v;
    rep.metrics[id] = e;
  };

  // Bootstrap closures for the applicable metrics; each resample owns a
  // derived stream so results are independent of evaluation order.
  std::vector<std::pair<std::string, std::function<double(RngStream&)>>> boots;

  // --- marginal distances ---
  if (depths_r.empty() || depths_s.empty()) {
    inapplicable("js_click_depth", "NO_CLICK_EVENTS");
  } else {
    auto [hr, hs] = unit_bin_histograms(depths_r, depths_s);
    set_value("js_click_depth", js_divergence(hr, hs));
    boots.emplace_back("js_click_depth", [&depths_r, &depths_s](RngStream& rng) {
      auto rr = resample_vec(depths_r, rng);
      auto ss = resample_vec(depths_s, rng);
      auto [h1, h2] = unit_bin_histograms(rr, ss);
      return js_divergence(h1, h2);
    });
  }

  set_value("w1_session_length", wasserstein1(lengths_r, lengths_s));
  boots.emplace_back("w1_session_length", [&lengths_r, &lengths_s](RngStream& rng) {
    return wasserstein1(resample_vec(lengths_r, rng), resample_vec(lengths_s, rng));
  });

  if (dwells_r.empty() || dwells_s.empty()) {
    inapplicable("ks_dwell", "NO_DWELL_EVENTS");
  } else {
    set_value("ks_dwell", ks_statistic(dwells_r, dwells_s));
    boots.emplace_back("ks_dwell", [&dwells_r, &dwells_s](RngStream& rng) {
      return ks_statistic(resample_vec(dwells_r, rng), resample_vec(dwells_s, rng));
    });
  }

  // --- sequence metrics ---
  const std::vector<double> big_r = bigram_distribution(real);
  const std::vector<double> big_s = bigram_distribution(sim);
  const double big_r_sum = std::accumulate(big_r.begin(), big_r.end(), 0.0);
  const double big_s_sum = std::accumulate(big_s.begin(), big_s.end(), 0.0);
  if (big_r_sum <= 0 || big_s_sum <= 0) {
    inapplicable("bigram_js", "NO_EVENT_BIGRAMS");
  } else {
    set_value("bigram_js", js_divergence(big_r, big_s));
    boots.emplace_back("bigram_js", [&bigrams_r, &bigrams_s](RngStream& rng) {
      std::vector<double> hr(kEventTypeCount * kEventTypeCount, 0.0);
      std::vector<double> hs(kEventTypeCount * kEventTypeCount, 0.0);
      for (int idx : resample_indices(bigrams_r.size(), rng))
        for (std::size_t c = 0; c < hr.size(); ++c) hr[c] += bigrams_r[idx][c];
      for (int idx : resample_indices(bigrams_s.size(), rng))
        for (std::size_t c = 0; c < hs.size(); ++c) hs[c] += bigrams_s[idx][c];
      return js_divergence(hr, hs);  // throws when a resample has no bigrams
    });
  }

  rep.diagnostics["pairing"] = {{"pairs", pairing.pairs.size()},
                                {"unmatched_sim", pairing.unmatched_sim}};
  if (pairing.pairs.empty() || pairing.unmatched_sim > 0) {
    inapplicable("nlev", "UNPAIRED_SESSIONS");
  } else {
    std::vector<double> pair_nlev;
    pair_nlev.reserve(pairing.pairs.size());
    for (const auto& [ri, si] : pairing.pairs)
      pair_nlev.push_back(normalized_levenshtein(strings_r[ri], strings_s[si]));
    set_value("nlev", mean_of(pair_nlev));
    boots.emplace_back("nlev", [pair_nlev](RngStream& rng) {
      return mean_of(resample_vec(pair_nlev, rng));
    });
  }

  if (reform_s.empty()) {
    inapplicable("reform_sim", "NO_MULTI_QUERY_SESSIONS");
  } else {
    set_value("reform_sim", mean_of(reform_s));
    boots.emplace_back("reform_sim", [&reform_s](RngStream& rng) {
      return mean_of(resample_vec(reform_s, rng));
    });
  }
  if (reform_r.empty() || reform_s.empty()) {
    inapplicable("reform_abs_diff", "NO_MULTI_QUERY_SESSIONS");
  } else {
    set_value("reform_abs_diff", std::abs(mean_of(reform_r) - mean_of(reform_s)));
    boots.emplace_back("reform_abs_diff", [&reform_r, &reform_s](RngStream& rng) {
      return std::abs(mean_of(resample_vec(reform_r, rng)) -
                      mean_of(resample_vec(reform_s, rng)));
    });
  }
  rep.diagnostics["reform_qualifying_sessions"] = {
      {"real", reform_r.size()}, {"sim", reform_s.size()}};

  // --- embedding-space distances ---
  const bool enough_rows = Xr.rows() >= 2 && Xs.rows() >= 2;
  if (!enough_rows) {
    inapplicable("mmd2", "INSUFFICIENT_SESSIONS");
    inapplicable("frechet", "INSUFFICIENT_SESSIONS");
  } else {
    const MmdResult mmd = mmd2_rbf(Xr, Xs, true);
    set_value("mmd2", mmd.value);
    rep.diagnostics["mmd"] = {{"raw", mmd.raw},
                              {"bandwidth", mmd.bandwidth},
                              {"degenerate", mmd.degenerate}};
    const FrechetResult fre = frechet_gaussian_distance(Xr, Xs);
    set_value("frechet", fre.value);
    rep.diagnostics["frechet"] = {{"clamp_magnitude", fre.clamp_magnitude},
                                  {"high_variance", fre.high_variance}};
    const std::size_t nr = static_cast<std::size_t>(Xr.rows());
    const std::size_t ns = static_cast<std::size_t>(Xs.rows());
    boots.emplace_back("mmd2", [&Xr, &Xs, nr, ns](RngStream& rng) {
      const Eigen::MatrixXd Rr = gather_rows(Xr, resample_indices(nr, rng));
      const Eigen::MatrixXd Rs = gather_rows(Xs, resample_indices(ns, rng));
      return mmd2_rbf(Rr, Rs, true).value;
    });
    boots.emplace_back("frechet", [&Xr, &Xs, nr, ns](RngStream& rng) {
      const Eigen::MatrixXd Rr = gather_rows(Xr, resample_indices(nr, rng));
      const Eigen::MatrixXd Rs = gather_rows(Xs, resample_indices(ns, rng));
      return frechet_gaussian_distance(Rr, Rs).value;
    });
  }

  // --- discriminator audit ---
  const std::size_t min_side = std::min(real.sessions.size(), sim.sessions.size());
  if (opt.with_audit && min_side >= static_cast<std::size_t>(opt.classifier_folds)) {
    const AuditResult audit =
        run_audit(real, sim, opt.classifier_folds, opt.seed, opt.thresholds);
    rep.audit = audit;
    const bool leaky = audit.verdict == "LEAKAGE_SUSPECTED";
    if (leaky) {
      MetricEntry e;
      e.applicable = false;
      e.reason = "LEAKAGE_SUSPECTED";
      rep.metrics["clf_auc"] = e;
      rep.diagnostics["clf_auc_quarantined"] = audit.auc(FeatureVariant::Main);
    } else {
      set_value("clf_auc", audit.auc(FeatureVariant::Main));
    }
    set_value("clf_auc_metadata", audit.auc(FeatureVariant::MetadataOnly));
    set_value("clf_auc_structural", audit.auc(FeatureVariant::StructuralOnly));
    set_value("clf_auc_masked", audit.auc(FeatureVariant::MaskedLength));
    set_value("clf_auc_permutation", audit.auc(FeatureVariant::Permutation));
  } else if (opt.with_audit) {
    for (const char* id : {"clf_auc", "clf_auc_metadata", "clf_auc_structural",
                           "clf_auc_masked", "clf_auc_permutation"})
      inapplicable(id, "INSUFFICIENT_SESSIONS");
  }

  // --- bootstrap CIs ---
  if (opt.with_bootstrap && opt.bootstrap_resamples > 0) {
    for (const auto& [id, fn] : boots) {
      const bool embedding_metric = id == "mmd2" || id == "frechet";
      const int resamples =
          embedding_metric && opt.embedding_resamples >= 0
              ? std::min(opt.embedding_resamples, opt.bootstrap_resamples)
              : opt.bootstrap_resamples;
      if (resamples <= 0) continue;
      std::vector<double> values(resamples);
      std::vector<char> ok(resamples, 0);
      const auto& f = fn;
      parallel_for(static_cast<std::size_t>(resamples), opt.workers,
                   [&](std::size_t k) {
                     RngStream rng = RngStream::from(
                         opt.seed, {"b1ci", id, std::to_string(k)});
                     try {
                       values[k] = f(rng);
                       ok[k] = 1;
                     } catch (const Error&) {
                       ok[k] = 0;
                     }
                   });
      std::vector<double> kept;
      kept.reserve(resamples);
      for (int k = 0; k < resamples; ++k)
        if (ok[k]) kept.push_back(values[k]);
      MetricEntry& e = rep.metrics[id];
      e.ci_dropped = resamples - static_cast<int>(kept.size());
      if (kept.empty()) {
        e.ci_unreliable = true;
        continue;
      }
      std::sort(kept.begin(), kept.end());
      e.has_ci = true;
      e.ci_lo = percentile(kept, 0.025);
      e.ci_hi = percentile(kept, 0.975);
      e.ci_unreliable = e.ci_dropped * 10 > resamples;
    }
  }

  return rep;
}

}  // namespace simeval
