#include "simeval/embed.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace simeval {

using nlohmann::json;

std::vector<double> embed_session(const Session& s) {
  std::vector<double> v(kEmbedDim, 0.0);
  const std::size_t n = s.events.size();
  if (n == 0) return v;

  double counts[kEventTypeCount] = {0};
  double bigrams[kEventTypeCount][kEventTypeCount] = {{0}};
  double click_rank_sum = 0, click_count = 0;
  double dwell_sum = 0, dwell_count = 0;
  double query_count = 0;

  for (std::size_t i = 0; i < n; ++i) {
    const Event& e = s.events[i];
    const int t = static_cast<int>(e.type);
    counts[t] += 1;
    if (i + 1 < n) bigrams[t][static_cast<int>(s.events[i + 1].type)] += 1;
    if (e.type == EventType::Query) query_count += 1;
    if (const auto* c = e.click()) {
      click_rank_sum += c->rank;
      click_count += 1;
    }
    if (const auto* d = e.dwell()) {
      dwell_sum += static_cast<double>(d->dwell_ms);
      dwell_count += 1;
    }
  }

  for (int t = 0; t < kEventTypeCount; ++t) v[t] = counts[t] / n;
  for (int a = 0; a < kEventTypeCount; ++a) {
    double row = 0;
    for (int b = 0; b < kEventTypeCount; ++b) row += bigrams[a][b];
    if (row > 0)
      for (int b = 0; b < kEventTypeCount; ++b)
        v[6 + a * kEventTypeCount + b] = bigrams[a][b] / row;
    // all-zero rows stay zero
  }
  v[42] = std::log1p(static_cast<double>(n));
  v[43] = click_count > 0 ? click_rank_sum / click_count : 0.0;
  v[44] = dwell_count > 0 ? std::log1p(dwell_sum / dwell_count) : 0.0;
  v[45] = query_count;
  return v;
}

Eigen::MatrixXd embed_corpus(const SessionCorpus& corpus) {
  Eigen::MatrixXd X(corpus.sessions.size(), kEmbedDim);
  for (std::size_t i = 0; i < corpus.sessions.size(); ++i) {
    const std::vector<double> v = embed_session(corpus.sessions[i]);
    for (int j = 0; j < kEmbedDim; ++j) X(static_cast<Eigen::Index>(i), j) = v[j];
  }
  return X;
}

ExternalEmbeddings load_embedding_sidecar(const std::filesystem::path& path,
                                          const std::string& name) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  ExternalEmbeddings ext;
  ext.layout_id = "external:" + name;
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Parse,
                  path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("session_id") || !j.contains("vector") ||
        !j.at("vector").is_array())
      throw Error(ErrorCode::Parse,
                  path.string() + " line " + std::to_string(line_no) +
                      ": expected {session_id, vector}");
    std::vector<double> vec;
    for (const json& x : j.at("vector")) {
      if (!x.is_number())
        throw Error(ErrorCode::Parse, path.string() + " line " +
                                          std::to_string(line_no) +
                                          ": vector entries must be numbers");
      vec.push_back(x.get<double>());
    }
    if (ext.dim == 0) ext.dim = static_cast<int>(vec.size());
    if (static_cast<int>(vec.size()) != ext.dim || ext.dim == 0)
      throw Error(ErrorCode::Parse, path.string() + " line " +
                                        std::to_string(line_no) +
                                        ": inconsistent vector dimension");
    ext.by_session[j.at("session_id").get<std::string>()] = std::move(vec);
  }
  return ext;
}

Eigen::MatrixXd embed_corpus_external(const SessionCorpus& corpus,
                                      const ExternalEmbeddings& ext) {
  Eigen::MatrixXd X(corpus.sessions.size(), ext.dim);
  for (std::size_t i = 0; i < corpus.sessions.size(); ++i) {
    auto it = ext.by_session.find(corpus.sessions[i].session_id);
    if (it == ext.by_session.end())
      throw Error(ErrorCode::InvalidArgument,
                  "no external embedding for session " +
                      corpus.sessions[i].session_id);
    for (int j = 0; j < ext.dim; ++j)
      X(static_cast<Eigen::Index>(i), j) = it->second[j];
  }
  return X;
}

}  // namespace simeval
