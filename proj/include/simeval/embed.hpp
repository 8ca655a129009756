#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "simeval/schema.hpp"

namespace simeval {

// Fixed 46-dim session embedding:
//   [0..5]   event-type frequencies
//   [6..41]  row-normalized 6x6 bigram transition matrix, row-major
//   [42]     log1p(event count)
//   [43]     mean click rank (0 if no clicks)
//   [44]     log1p(mean dwell_ms) (0 if no dwells)
//   [45]     query count
inline constexpr const char* kEmbedLayoutId = "act-seq-v1";
inline constexpr int kEmbedDim = 46;

std::vector<double> embed_session(const Session& s);

// Rows follow corpus order.
Eigen::MatrixXd embed_corpus(const SessionCorpus& corpus);

struct ExternalEmbeddings {
  std::string layout_id;  // "external:<name>"
  int dim = 0;
  std::map<std::string, std::vector<double>> by_session;
};

// Sidecar JSONL, one {"session_id": ..., "vector": [...]} object per line.
ExternalEmbeddings load_embedding_sidecar(const std::filesystem::path& path,
                                          const std::string& name);

// Errors on sessions missing from the sidecar or dimension mismatches.
Eigen::MatrixXd embed_corpus_external(const SessionCorpus& corpus,
                                      const ExternalEmbeddings& ext);

}  // namespace simeval
