#pragma once

// The JSON document that drives every command. Parsing rejects unknown keys
// and validate() checks cross-field constraints before any work starts.

#include <cstddef>
#include <cstdint>
#include <string>

#include "json.hpp"

#include "efbg/hyperband.hpp"
#include "efbg/loss.hpp"
#include "efbg/model.hpp"
#include "efbg/optim.hpp"
#include "efbg/preprocess.hpp"
#include "efbg/simulator.hpp"
#include "efbg/train.hpp"

namespace efbg {

struct SplitConfig {
  double train = 0.8;
  double val = 0.1;
  /// Every sample serves as train, validation and test row (overfit checks
  /// on tiny datasets).
  bool all = false;
};

struct SiameseConfig {
  bool enabled = false;
  CompositeLossParams loss;
  std::size_t pair_budget = 2000000;
  double band = 0.01;
  bool relative_band = true;
};

struct HyperbandConfig {
  std::size_t max_epochs = 27;
  std::size_t eta = 3;
  std::string space = "layers";
};

struct RunConfig {
  std::string dataset;
  std::uint64_t seed = 0;
  SplitConfig split;
  InputMethod input = InputMethod::ZScale1D;
  OutputMethod output = OutputMethod::M4;
  ExtractorConfig architecture = ExtractorConfig::reference();
  double dropout = 0.0;
  OptimizerConfig optimizer;
  RegressionLoss loss = RegressionLoss::MSE;
  double huber_delta = 1.0;  // Huber and modified-Huber regression losses
  TrainOptions training;
  SiameseConfig siamese;
  HyperbandConfig hyperband;
  GeneratorConfig generator;

  void validate() const;
  Split make_split(std::size_t n) const;
  SiameseOptions siamese_options() const;
};

/// An absent "optimizer" defaults to RMSprop (lr 1e-4, momentum 0.9, rho 0.7)
/// when Siamese training is enabled, else to AdamW with lr 1e-3.
RunConfig parse_run_config(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& c);
RunConfig load_run_config(const std::string& path);

/// Writes one sampled hyperparameter set into a config. Recognized names:
/// dropout, optimizer, learning_rate, weight_decay, momentum, rho, loss,
/// kernel, channels_k, pool_k, pool_size_k, alpha, delta, margin.
void apply_trial(RunConfig& c, const nlohmann::json& trial);

}  // namespace efbg
