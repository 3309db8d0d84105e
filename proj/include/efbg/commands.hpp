#pragma once

// The five command-line operations as library calls. Each is a pure function
// of its input files, configuration and seed.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "efbg/hyperband.hpp"
#include "efbg/metrics.hpp"
#include "efbg/pairs.hpp"
#include "efbg/run_config.hpp"
#include "efbg/train.hpp"

namespace efbg::cli {

namespace fs = std::filesystem;

/// Writes the dataset and its JSON sidecar (seed, generator config, digests).
nlohmann::json cmd_generate(std::size_t n, std::uint64_t seed, const fs::path& out, const GeneratorConfig& generator);

struct TrainOutcome {
  TrainHistory history;
  nlohmann::json manifest;
  fs::path history_path;
};

/// Trains per the config, writes the checkpoint and a history table next to it
/// (`<checkpoint>.history.csv`). `progress` receives one line per epoch.
TrainOutcome cmd_train(const RunConfig& config, const fs::path& out_checkpoint, std::ostream* progress = nullptr);

/// Resolves a space preset by file path, then by name in $EFBG_PRESETS and
/// the installed preset directory.
SearchSpace load_space(const std::string& name_or_path);
fs::path presets_dir();

struct TuneOutcome {
  HyperbandResult result;
  RunConfig best;  // base config with the winning trial applied
};

/// Runs Hyperband with the trial ledger appended to `ledger`. With `resume`,
/// evaluations already in the ledger are reused.
TuneOutcome cmd_tune(const RunConfig& config, const std::string& space, const fs::path& ledger, bool resume = false);

struct EvalOutcome {
  std::vector<ShapeErrorReport> reports;
  std::vector<std::size_t> sample_ids;
  BoxStats tip_error;
  BoxStats rmse;
};

/// Evaluates a checkpoint on one split ("train", "val", "test" or "all") of a
/// dataset, rebuilding the split from the run configuration in the manifest.
EvalOutcome cmd_eval(const fs::path& checkpoint, const fs::path& dataset, const std::string& split,
                     const std::optional<fs::path>& report = std::nullopt);

struct PairsOutcome {
  PairThresholds thresholds;
  PairCounts counts;
  std::size_t sampled = 0;
};

/// Thresholds and labeled pairs over the whole dataset; `out` receives one
/// row per labeled pair after a commented threshold header.
PairsOutcome cmd_pairs(const fs::path& dataset, std::size_t budget, std::uint64_t seed,
                       const std::optional<fs::path>& out = std::nullopt);

}  // namespace efbg::cli
