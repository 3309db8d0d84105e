#include "efbg/run_config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "efbg/dataset.hpp"
#include "efbg/error.hpp"
#include "efbg/json_util.hpp"

namespace efbg {

using nlohmann::json;

void RunConfig::validate() const {
  if (!split.all) {
    if (!(split.train > 0.0 && split.val > 0.0 && split.train + split.val < 1.0)) {
      throw ConfigError("split fractions must be positive and leave a test share");
    }
  }
  architecture.validate();
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  optimizer.validate();
  if (!(huber_delta > 0.0)) throw ConfigError("huber_delta must be positive");
  if (training.batch_size == 0) throw ConfigError("training.batch_size must be positive");
  if (training.epochs == 0) throw ConfigError("training.epochs must be positive");
  if (siamese.enabled) {
    siamese.loss.validate();
    if (output != OutputMethod::M4) throw ConfigError("siamese training requires output_method M4");
    if (siamese.pair_budget == 0) throw ConfigError("siamese.pair_budget must be positive");
    if (training.batch_size % 2 != 0) throw ConfigError("siamese training needs an even batch size");
  }
  if (hyperband.eta < 2 || hyperband.max_epochs < hyperband.eta) {
    throw ConfigError("hyperband needs eta >= 2 and max_epochs >= eta");
  }
}

Split RunConfig::make_split(std::size_t n) const {
  if (split.all) {
    if (n == 0) throw DomainError("dataset is empty");
    Split s;
    for (std::size_t i = 0; i < n; ++i) s.train.push_back(i);
    s.val = s.train;
    s.test = s.train;
    return s;
  }
  return split_indices(n, seed, split.train, split.val);
}

SiameseOptions RunConfig::siamese_options() const {
  SiameseOptions o;
  o.loss = siamese.loss;
  o.pair_budget = siamese.pair_budget;
  o.band = siamese.band;
  o.relative_band = siamese.relative_band;
  return o;
}

RunConfig parse_run_config(const json& j) {
  constexpr std::string_view ctx = "config";
  reject_unknown_keys(j,
                      {"dataset", "seed", "split", "input_transform", "output_method", "architecture", "dropout",
                       "optimizer", "loss", "huber_delta", "training", "siamese", "hyperband", "generator"},
                      ctx);
  RunConfig c;
  read_opt(j, "dataset", c.dataset, ctx);
  read_opt(j, "seed", c.seed, ctx);
  if (auto it = j.find("split"); it != j.end()) {
    if (it->is_string()) {
      if (*it != "all") throw SchemaError("config.split: expected \"all\" or an object");
      c.split.all = true;
    } else {
      reject_unknown_keys(*it, {"train", "val"}, "config.split");
      read_opt(*it, "train", c.split.train, "config.split");
      read_opt(*it, "val", c.split.val, "config.split");
    }
  }
  std::string s;
  if (j.contains("input_transform")) {
    read_opt(j, "input_transform", s, ctx);
    c.input = parse_input_method(s);
  }
  if (j.contains("output_method")) {
    read_opt(j, "output_method", s, ctx);
    c.output = parse_output_method(s);
  }
  if (auto it = j.find("architecture"); it != j.end()) {
    try {
      c.architecture = it->get<ExtractorConfig>();
    } catch (const json::exception& e) {
      throw SchemaError(std::string("config.architecture: ") + e.what());
    }
  }
  read_opt(j, "dropout", c.dropout, ctx);
  read_opt(j, "huber_delta", c.huber_delta, ctx);
  if (j.contains("loss")) {
    read_opt(j, "loss", s, ctx);
    c.loss = parse_regression_loss(s);
  }
  if (auto it = j.find("training"); it != j.end()) {
    constexpr std::string_view t = "config.training";
    reject_unknown_keys(*it, {"epochs", "batch_size", "patience", "early_stopping"}, t);
    read_opt(*it, "epochs", c.training.epochs, t);
    read_opt(*it, "batch_size", c.training.batch_size, t);
    read_opt(*it, "patience", c.training.patience, t);
    read_opt(*it, "early_stopping", c.training.early_stopping, t);
  }
  if (auto it = j.find("siamese"); it != j.end()) {
    constexpr std::string_view t = "config.siamese";
    reject_unknown_keys(*it, {"enabled", "alpha", "margin", "delta", "pair_budget", "band", "relative_band"}, t);
    read_opt(*it, "enabled", c.siamese.enabled, t);
    read_opt(*it, "alpha", c.siamese.loss.alpha, t);
    read_opt(*it, "margin", c.siamese.loss.margin, t);
    read_opt(*it, "delta", c.siamese.loss.delta, t);
    read_opt(*it, "pair_budget", c.siamese.pair_budget, t);
    read_opt(*it, "band", c.siamese.band, t);
    read_opt(*it, "relative_band", c.siamese.relative_band, t);
  }
  if (auto it = j.find("optimizer"); it != j.end()) {
    it->get_to(c.optimizer);
  } else if (c.siamese.enabled) {
    c.optimizer = OptimizerConfig::siamese_default();
  } else {
    c.optimizer.kind = OptimizerKind::AdamW;
    c.optimizer.learning_rate = 1e-3;
  }
  if (auto it = j.find("hyperband"); it != j.end()) {
    constexpr std::string_view t = "config.hyperband";
    reject_unknown_keys(*it, {"max_epochs", "eta", "space"}, t);
    read_opt(*it, "max_epochs", c.hyperband.max_epochs, t);
    read_opt(*it, "eta", c.hyperband.eta, t);
    read_opt(*it, "space", c.hyperband.space, t);
  }
  if (auto it = j.find("generator"); it != j.end()) it->get_to(c.generator);
  c.training.seed = c.seed;
  c.validate();
  return c;
}

json run_config_to_json(const RunConfig& c) {
  json j;
  j["dataset"] = c.dataset;
  j["seed"] = c.seed;
  j["split"] = c.split.all ? json("all") : json{{"train", c.split.train}, {"val", c.split.val}};
  j["input_transform"] = to_string(c.input);
  j["output_method"] = to_string(c.output);
  j["architecture"] = c.architecture;
  j["dropout"] = c.dropout;
  j["optimizer"] = c.optimizer;
  j["loss"] = to_string(c.loss);
  j["huber_delta"] = c.huber_delta;
  j["training"] = {{"epochs", c.training.epochs},
                   {"batch_size", c.training.batch_size},
                   {"patience", c.training.patience},
                   {"early_stopping", c.training.early_stopping}};
  j["siamese"] = {{"enabled", c.siamese.enabled},         {"alpha", c.siamese.loss.alpha},
                  {"margin", c.siamese.loss.margin},       {"delta", c.siamese.loss.delta},
                  {"pair_budget", c.siamese.pair_budget},  {"band", c.siamese.band},
                  {"relative_band", c.siamese.relative_band}};
  j["hyperband"] = {{"max_epochs", c.hyperband.max_epochs}, {"eta", c.hyperband.eta}, {"space", c.hyperband.space}};
  j["generator"] = c.generator;
  return j;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

namespace {

std::size_t layer_index(const std::string& key, const std::string& prefix, std::size_t layers) {
  const std::string digits = key.substr(prefix.size());
  std::size_t k = 0;
  try {
    k = std::stoul(digits);
  } catch (const std::exception&) {
    throw SchemaError("trial key '" + key + "' has no layer number");
  }
  if (k == 0 || k > layers) {
    throw ConfigError("trial key '" + key + "' names layer " + std::to_string(k) + " of " + std::to_string(layers));
  }
  return k - 1;
}

bool starts_with(const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; }

}  // namespace

void apply_trial(RunConfig& c, const json& trial) {
  if (!trial.is_object()) throw SchemaError("trial configuration must be an object");
  auto& arch = c.architecture;
  const std::size_t layers = arch.channels.size();
  std::vector<int> pool_on(layers, -1);
  std::vector<std::size_t> pool_size(layers, 0);
  try {
    for (const auto& [key, v] : trial.items()) {
      if (key == "dropout") c.dropout = v.get<double>();
      else if (key == "optimizer") c.optimizer.kind = parse_optimizer_kind(v.get<std::string>());
      else if (key == "learning_rate") c.optimizer.learning_rate = v.get<double>();
      else if (key == "weight_decay") c.optimizer.weight_decay = v.get<double>();
      else if (key == "momentum") c.optimizer.momentum = v.get<double>();
      else if (key == "rho") c.optimizer.rho = v.get<double>();
      else if (key == "loss") c.loss = parse_regression_loss(v.get<std::string>());
      else if (key == "kernel") arch.kernel = v.get<std::size_t>();
      else if (key == "alpha") c.siamese.loss.alpha = v.get<double>();
      else if (key == "delta") c.siamese.loss.delta = v.get<double>();
      else if (key == "margin") c.siamese.loss.margin = v.get<double>();
      else if (starts_with(key, "channels_")) arch.channels[layer_index(key, "channels_", layers)] = v.get<std::size_t>();
      else if (starts_with(key, "pool_size_")) pool_size[layer_index(key, "pool_size_", layers)] = v.get<std::size_t>();
      else if (starts_with(key, "pool_")) pool_on[layer_index(key, "pool_", layers)] = v.get<bool>() ? 1 : 0;
      else throw SchemaError("unknown hyperparameter '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("trial configuration: ") + e.what());
  }
  for (std::size_t k = 0; k < layers; ++k) {
    if (pool_on[k] == 0) {
      arch.pool[k] = 0;
    } else if (pool_on[k] == 1) {
      arch.pool[k] = pool_size[k] ? pool_size[k] : (arch.pool[k] ? arch.pool[k] : 2);
    } else if (pool_size[k] && arch.pool[k]) {
      arch.pool[k] = pool_size[k];
    }
  }
  c.validate();
}

}  // namespace efbg
