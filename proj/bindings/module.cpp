#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "simeval/bench.hpp"
#include "simeval/classifier.hpp"
#include "simeval/embed.hpp"
#include "simeval/error.hpp"
#include "simeval/ingest.hpp"
#include "simeval/realism.hpp"
#include "simeval/reliability.hpp"
#include "simeval/rng.hpp"
#include "simeval/schema.hpp"
#include "simeval/simulate.hpp"
#include "simeval/stats.hpp"
#include "simeval/testbed.hpp"

namespace py = pybind11;
using namespace py::literals;
using nlohmann::json;
using namespace simeval;

namespace {

py::object json_to_py(const json& j) {
  switch (j.type()) {
    case json::value_t::null:
      return py::none();
    case json::value_t::boolean:
      return py::bool_(j.get<bool>());
    case json::value_t::number_integer:
      return py::int_(j.get<std::int64_t>());
    case json::value_t::number_unsigned:
      return py::int_(j.get<std::uint64_t>());
    case json::value_t::number_float:
      return py::float_(j.get<double>());
    case json::value_t::string:
      return py::str(j.get<std::string>());
    case json::value_t::array: {
      py::list l;
      for (const json& e : j) l.append(json_to_py(e));
      return l;
    }
    case json::value_t::object: {
      py::dict d;
      for (const auto& [k, v] : j.items()) d[py::str(k)] = json_to_py(v);
      return d;
    }
    default:
      return py::none();
  }
}

json py_to_json(py::handle h) {
  if (h.is_none()) return nullptr;
  if (py::isinstance<py::bool_>(h)) return h.cast<bool>();
  if (py::isinstance<py::int_>(h)) {
    try {
      return h.cast<std::int64_t>();
    } catch (const py::cast_error&) {
      return h.cast<std::uint64_t>();
    }
  }
  if (py::isinstance<py::float_>(h)) return h.cast<double>();
  if (py::isinstance<py::str>(h)) return h.cast<std::string>();
  if (py::isinstance<py::dict>(h)) {
    json o = json::object();
    for (const auto& item : h.cast<py::dict>())
      o[item.first.cast<std::string>()] = py_to_json(item.second);
    return o;
  }
  if (py::isinstance<py::list>(h) || py::isinstance<py::tuple>(h)) {
    json a = json::array();
    for (const auto& e : h.cast<py::sequence>()) a.push_back(py_to_json(e));
    return a;
  }
  throw Error(ErrorCode::InvalidArgument,
              "unsupported Python type for JSON conversion");
}

Qrels qrels_from_py(py::handle h) {
  Qrels q;
  for (const auto& item : h.cast<py::dict>()) {
    auto& docs = q[item.first.cast<std::string>()];
    for (const auto& d : item.second.cast<py::dict>())
      docs[d.first.cast<std::string>()] = d.second.cast<int>();
  }
  return q;
}

SimulatorConfig sim_config(py::handle h) {
  return simulator_config_from_json(py_to_json(h));
}

}  // namespace

PYBIND11_MODULE(_simeval, m) {
  m.doc() = "session-log ingestion and simulator evaluation core";
  m.attr("__version__") = kToolVersion;
  m.attr("SCHEMA_VERSION") = kSchemaVersion;
  m.attr("EMBED_LAYOUT_ID") = kEmbedLayoutId;
  m.attr("EMBED_DIM") = kEmbedDim;

  static py::exception<Error> exc(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const std::string what =
          std::string("[") + to_string(e.code()) + "] " + e.message();
      exc(what.c_str());
    }
  });

  py::class_<SessionCorpus>(m, "Corpus")
      .def_static(
          "read",
          [](const std::string& path, bool strict) {
            return read_jsonl(path, strict ? ReadMode::Strict : ReadMode::Lenient);
          },
          "path"_a, "strict"_a = true)
      .def("write", [](const SessionCorpus& c,
                       const std::string& path) { write_jsonl(c, path); },
           "path"_a)
      .def("__len__", [](const SessionCorpus& c) { return c.sessions.size(); })
      .def("session_ids",
           [](const SessionCorpus& c) {
             std::vector<std::string> ids;
             ids.reserve(c.sessions.size());
             for (const Session& s : c.sessions) ids.push_back(s.session_id);
             return ids;
           })
      .def("session",
           [](const SessionCorpus& c, std::size_t i) {
             if (i >= c.sessions.size())
               throw Error(ErrorCode::InvalidArgument, "session index out of range");
             return json_to_py(session_to_json(c.sessions[i]));
           },
           "i"_a)
      .def_property_readonly("manifest", [](const SessionCorpus& c) {
        return json_to_py(c.manifest.to_json());
      });

  m.def(
      "generate_synthetic_log",
      [](py::handle spec, std::uint64_t seed) {
        return generate_synthetic_log(synth_spec_from_json(py_to_json(spec)), seed);
      },
      "spec"_a = py::dict(), "seed"_a = 0);
  m.def(
      "generate_graded_log",
      [](py::handle spec, std::uint64_t seed) {
        GradedSynthResult r =
            generate_graded_log(graded_synth_spec_from_json(py_to_json(spec)), seed);
        json q = json::object();
        for (const auto& [qid, docs] : r.qrels) {
          json dj = json::object();
          for (const auto& [d, g] : docs) dj[d] = g;
          q[qid] = dj;
        }
        return py::make_tuple(std::move(r.corpus), json_to_py(q));
      },
      "spec"_a = py::dict(), "seed"_a = 0);
  m.def(
      "ingest_weblog_tsv",
      [](const std::string& path, py::handle cfg) {
        const json c = py_to_json(cfg);
        SessionizeConfig sc;
        sc.dataset_id = c.value("dataset_id", sc.dataset_id);
        sc.dataset_version = c.value("dataset_version", sc.dataset_version);
        sc.timeout_minutes = c.value("timeout_minutes", sc.timeout_minutes);
        sc.min_session_events = c.value("min_session_events", sc.min_session_events);
        sc.synth_serp_depth = c.value("synth_serp_depth", sc.synth_serp_depth);
        sc.seed = c.value("seed", sc.seed);
        return ingest_weblog_tsv(path, sc).corpus;
      },
      "path"_a, "config"_a = py::dict());
  m.def("parse_qrels", [](const std::string& path) {
    json q = json::object();
    for (const auto& [qid, docs] : parse_qrels(path)) {
      json dj = json::object();
      for (const auto& [d, g] : docs) dj[d] = g;
      q[qid] = dj;
    }
    return json_to_py(q);
  }, "path"_a);

  m.def(
      "simulate",
      [](const SessionCorpus& real, py::handle qrels, py::handle config) {
        const Qrels q = qrels_from_py(qrels);
        const SimulatorConfig cfg = sim_config(config);
        py::gil_scoped_release rel;
        return simulate_corpus(real, flatten_qrels(q), cfg);
      },
      "real"_a, "qrels"_a = py::dict(), "config"_a = py::dict());

  m.def("embed_session", [](py::handle session) {
    return embed_session(session_from_json(py_to_json(session)));
  }, "session"_a);
  m.def("embed_corpus", [](const SessionCorpus& c) { return embed_corpus(c); },
        "corpus"_a);
  m.def("validate_session", [](py::handle session) {
    const Session s = session_from_json(py_to_json(session));
    std::vector<std::string> out;
    for (const Violation& v : validate_session(s))
      out.push_back(std::string(to_string(v.code)) +
                    (v.detail.empty() ? "" : ": " + v.detail));
    return out;
  }, "session"_a);

  m.def(
      "run_b1",
      [](const SessionCorpus& real, const SessionCorpus& sim, py::handle options) {
        const json o = py_to_json(options);
        B1Options opt;
        opt.seed = o.value("seed", opt.seed);
        opt.bootstrap_resamples = o.value("bootstrap_resamples", opt.bootstrap_resamples);
        opt.embedding_resamples = o.value("embedding_resamples", opt.embedding_resamples);
        opt.classifier_folds = o.value("classifier_folds", opt.classifier_folds);
        opt.thresholds.leakage_auc = o.value("leakage_auc", opt.thresholds.leakage_auc);
        opt.with_bootstrap = o.value("with_bootstrap", opt.with_bootstrap);
        opt.with_audit = o.value("with_audit", opt.with_audit);
        opt.workers = o.value("workers", opt.workers);
        json rep;
        {
          py::gil_scoped_release rel;
          rep = run_b1(real, sim, opt).to_json();
        }
        return json_to_py(rep);
      },
      "real"_a, "sim"_a, "options"_a = py::dict());

  const auto bench = [](json (*fn)(const json&, const JobContext&)) {
    return [fn](py::handle cfg, int workers, bool dry_run) {
      const json c = py_to_json(cfg);
      JobContext ctx;
      ctx.workers = workers;
      ctx.dry_run = dry_run;
      json rep;
      {
        py::gil_scoped_release rel;
        rep = fn(c, ctx);
      }
      return json_to_py(rep);
    };
  };
  m.def("run_b1_job", bench(&run_b1_job), "config"_a, "workers"_a = 1,
        "dry_run"_a = false);
  m.def("run_b2_job", bench(&run_b2_job), "config"_a, "workers"_a = 1,
        "dry_run"_a = false);
  m.def("run_b3_job", bench(&run_b3_job), "config"_a, "workers"_a = 1,
        "dry_run"_a = false);

  m.def("js_divergence", [](std::vector<double> p, std::vector<double> q) {
    return js_divergence(p, q);
  }, "p"_a, "q"_a);
  m.def("wasserstein1", &wasserstein1, "xs"_a, "ys"_a);
  m.def("ks_statistic", &ks_statistic, "xs"_a, "ys"_a);
  m.def("normalized_levenshtein", [](const std::string& a, const std::string& b) {
    return normalized_levenshtein(a, b);
  }, "a"_a, "b"_a);
  m.def("token_jaccard", [](const std::string& a, const std::string& b) {
    return token_jaccard(a, b);
  }, "a"_a, "b"_a);
  m.def("mmd2_rbf", [](const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    const MmdResult r = mmd2_rbf(x, y);
    return json_to_py(json{{"value", r.value},
                           {"raw", r.raw},
                           {"bandwidth", r.bandwidth},
                           {"degenerate", r.degenerate}});
  }, "x"_a, "y"_a);
  m.def("frechet_distance", [](const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    const FrechetResult r = frechet_gaussian_distance(x, y);
    return json_to_py(json{{"value", r.value},
                           {"clamp_magnitude", r.clamp_magnitude},
                           {"high_variance", r.high_variance}});
  }, "x"_a, "y"_a);
  m.def("pearson_r", [](std::vector<double> a, std::vector<double> b) {
    return pearson_r(a, b);
  }, "a"_a, "b"_a);
  m.def("pearson_p_two_sided", &pearson_p_two_sided, "r"_a, "n"_a);

  m.def("kendall_tau", [](std::vector<double> a, std::vector<double> b) {
    return kendall_tau(a, b);
  }, "a"_a, "b"_a);
  m.def("spearman_rho", [](std::vector<double> a, std::vector<double> b) {
    return spearman_rho(a, b);
  }, "a"_a, "b"_a);
  m.def("tau_ap", [](std::vector<double> truth, std::vector<double> tester) {
    return tau_ap(truth, tester);
  }, "truth"_a, "tester"_a);
  m.def("pairwise_concordance", [](std::vector<double> a, std::vector<double> b) {
    return pairwise_concordance(a, b);
  }, "a"_a, "b"_a);

  m.def(
      "ndcg_at_k",
      [](const std::vector<std::string>& ranking, py::handle grades, int k) {
        std::map<std::string, int> g;
        for (const auto& item : grades.cast<py::dict>())
          g[item.first.cast<std::string>()] = item.second.cast<int>();
        return ndcg_at_k(ranking, g, k);
      },
      "ranking"_a, "grades"_a, "k"_a = 10);

  m.def("derive_seed", [](std::uint64_t base, const std::vector<std::string>& tags) {
    std::vector<std::string_view> views(tags.begin(), tags.end());
    return derive_seed(base, std::span<const std::string_view>(views));
  }, "base"_a, "tags"_a);

  m.def("config_hash", [](py::handle cfg) { return config_hash(py_to_json(cfg)); },
        "config"_a);
  m.def("canonical_json", [](py::handle v) { return canonical_json(py_to_json(v)); },
        "value"_a);
  m.def("sha256_hex", [](const std::string& s) { return sha256_hex(s); }, "data"_a);
}
