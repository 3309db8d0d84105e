#pragma once

// Hyperband over discrete search spaces. Brackets trade the number of sampled
// configurations against the epochs each receives; within a bracket,
// Successive Halving keeps the best floor(n / eta) configurations per round.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"

#include "efbg/random.hpp"

namespace efbg {

/// One search dimension: an explicit choice list or an inclusive stepped range.
struct Dimension {
  std::string name;
  std::vector<nlohmann::json> choices;  // categorical when non-empty
  double min = 0.0, max = 0.0, step = 0.0;

  bool categorical() const noexcept { return !choices.empty(); }
  /// Every grid value; stepped ranges yield integers when min, max and step are integral.
  std::vector<nlohmann::json> values() const;
};

/// JSON form: {"name": ..., "dimensions": [{"name", "choices"} | {"name", "min", "max", "step"}]},
/// where a dimension may carry "repeat": k to expand into name_1 .. name_k.
struct SearchSpace {
  std::string name;
  std::vector<Dimension> dimensions;

  void validate() const;
  static SearchSpace from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Uniform draw over each dimension's grid; returns {name: value}.
nlohmann::json sample_config(const SearchSpace& space, Rng& rng);

struct Round {
  std::size_t configs = 0;
  std::size_t epochs = 0;  // cumulative epochs a survivor has trained after this round
};

struct Bracket {
  std::size_t s = 0;
  std::vector<Round> rounds;
};

struct BracketPlan {
  std::size_t max_epochs = 0;  // R
  std::size_t eta = 0;
  std::size_t s_max = 0;
  std::vector<Bracket> brackets;  // s = s_max down to 0
};

/// s_max = floor(log_eta R); bracket s starts n = ceil((s_max + 1) eta^s / (s + 1))
/// configs at r = R eta^-s epochs; n_{i+1} = floor(n_i / eta), r_{i+1} = r_i eta.
BracketPlan plan_brackets(std::size_t max_epochs, std::size_t eta);

enum class TrialStatus { Ok, Failed };
const char* to_string(TrialStatus s);

struct TrialSpec {
  std::size_t id = 0;
  std::size_t bracket = 0;  // s
  std::uint64_t seed = 0;
  nlohmann::json config;
};

struct TrialResult {
  TrialSpec trial;
  std::size_t epochs_trained = 0;  // cumulative epochs at the last evaluation
  std::size_t epochs_used = 0;     // epochs charged to this trial
  double objective = std::numeric_limits<double>::infinity();
  TrialStatus status = TrialStatus::Ok;
  std::string error;
};

/// Trains a trial from `from_epochs` to `to_epochs` cumulative epochs and
/// returns the validation objective (lower is better). A runner that no
/// longer holds the trial's state must rebuild it; trials are hermetic, so
/// retraining reproduces the same state. Exceptions mark the trial failed.
class TrialRunner {
 public:
  virtual ~TrialRunner() = default;
  virtual double run(const TrialSpec& trial, std::size_t from_epochs, std::size_t to_epochs) = 0;
  /// The trial was eliminated; its state may be dropped.
  virtual void release(std::size_t /*trial_id*/) {}
};

struct HyperbandOptions {
  std::size_t max_epochs = 27;
  std::size_t eta = 3;
  std::uint64_t seed = 0;
  std::ostream* ledger = nullptr;        // one JSON record per evaluation
  std::vector<nlohmann::json> replay;    // records from an earlier ledger
};

struct HyperbandResult {
  BracketPlan plan;
  std::vector<TrialResult> ranked;                 // best first, failed last
  std::vector<std::size_t> epochs_per_bracket;     // aligned with plan.brackets
  std::vector<std::vector<std::vector<std::size_t>>> survivors;  // [bracket][round] ids entering
};

/// Runs every bracket of the plan. Evaluations already present in `replay`
/// with a matching trial id, epoch target and config are not re-run.
HyperbandResult run_hyperband(const SearchSpace& space, TrialRunner& runner, const HyperbandOptions& options);

/// Reads line-delimited ledger records, skipping blank lines.
std::vector<nlohmann::json> read_ledger(std::istream& in);

}  // namespace efbg
