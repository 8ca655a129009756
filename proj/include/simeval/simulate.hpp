#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "simeval/rng.hpp"
#include "simeval/schema.hpp"

namespace simeval {

enum class SimulatorKind { Pbm, Dbn, Heuristic, LlmSim };

const char* to_string(SimulatorKind k);
std::optional<SimulatorKind> simulator_kind_from_string(std::string_view s);

struct PbmParams {
  double attract_rel = 0.55;
  double attract_nonrel = 0.05;
  // Examination probability by rank; empty means 1/rank. Ranks beyond the
  // curve reuse its last value.
  std::vector<double> examination_curve;
};

struct DbnParams {
  double attract_rel = 0.55;
  double attract_nonrel = 0.05;
  double satisfy_rel = 0.20;
  double satisfy_nonrel = 0.10;
  double continuation = 0.65;
};

// How many clicks the position-only simulator produces per SERP.
enum class HeuristicClickVolume { CopyReal, Geometric };

struct HeuristicParams {
  HeuristicClickVolume volume = HeuristicClickVolume::CopyReal;
  double geometric_p = 0.5;  // used by the Geometric volume model
};

struct LlmSimParams {
  double depth_shift_p = 0.5;    // geometric shallowing of examination
  double dwell_multiplier = 1.8;
  double paraphrase_prob = 0.3;  // applies to follow-up queries only
};

struct DwellModel {
  double mu = 9.6;  // log-ms
  double sigma = 0.75;
  bool fitted = false;
};

// Fit a log-normal to the positive dwell times of a corpus; returns the
// default model when the corpus has no dwell events.
DwellModel fit_dwell_lognormal(const SessionCorpus& corpus);

struct SimulatorConfig {
  SimulatorKind kind = SimulatorKind::Pbm;
  PbmParams pbm;
  DbnParams dbn;
  HeuristicParams heuristic;
  LlmSimParams llm;
  DwellModel dwell;
  int rel_grade_threshold = 1;  // grade >= threshold counts as relevant
  std::uint64_t seed = 0;

  std::string simulator_id() const;
  nlohmann::json to_json() const;
  void validate() const;  // throws Error(Config) on out-of-range parameters
};

// Inverse of SimulatorConfig::to_json; unknown kinds and out-of-range
// parameters raise Config errors.
SimulatorConfig simulator_config_from_json(const nlohmann::json& j);

using DocGrades = std::map<std::string, int>;

// Replays one real session through the configured click model. QUERY and
// SERP_VIEW events are reused; CLICK/DWELL are resampled. Synthetic event
// timestamps advance by the real session's median inter-event gap.
Session simulate_session(const Session& real, const DocGrades& grades,
                         const SimulatorConfig& cfg, RngStream& rng);

// One simulated session per real session, paired by session_id suffix
// "<real_id>#<simulator_id>". Fits the dwell model from the real corpus when
// cfg.dwell.fitted is false.
SessionCorpus simulate_corpus(const SessionCorpus& real, const DocGrades& grades,
                              SimulatorConfig cfg);

// Pairing suffix helpers.
std::string simulated_session_id(const std::string& real_id,
                                 const std::string& simulator_id);
std::optional<std::string> real_id_of_simulated(const std::string& sim_id);

}  // namespace simeval
