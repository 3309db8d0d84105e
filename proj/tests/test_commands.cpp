#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "efbg/checkpoint.hpp"
#include "efbg/commands.hpp"
#include "efbg/dataset.hpp"
#include "efbg/error.hpp"

using namespace efbg;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "efbg_test_commands";
  fs::create_directories(dir);
  return dir / name;
}

json small_config(const fs::path& dataset) {
  json j = json::parse(R"({"seed": 3, "architecture": {"kernel": 5, "channels": [8, 8], "pool": [3, 3]},
                           "training": {"epochs": 3, "batch_size": 16, "patience": 5}})");
  j["dataset"] = dataset.string();
  return j;
}

const fs::path& shared_dataset() {
  static const fs::path p = [] {
    const fs::path path = scratch("shared.bin");
    cli::cmd_generate(120, 21, path, GeneratorConfig{});
    return path;
  }();
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(EFBG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("generate is byte-reproducible and writes a sidecar") {
  const fs::path a = scratch("gen_a.bin"), b = scratch("gen_b.bin");
  const json sa = cli::cmd_generate(25, 9, a, GeneratorConfig{});
  const json sb = cli::cmd_generate(25, 9, b, GeneratorConfig{});
  CHECK(read_file_bytes(a) == read_file_bytes(b));
  CHECK(sa == sb);
  CHECK(sa["seed"] == 9);
  CHECK(sa["n_samples"] == 25);
  CHECK(fs::exists(sidecar_path(a)));
  CHECK(fs::file_size(a) == dataset_file_size(25));
}

TEST_CASE("run configuration schema") {
  const json base = small_config("x.bin");
  const RunConfig c = parse_run_config(base);
  CHECK(c.seed == 3);
  CHECK(c.output == OutputMethod::M4);
  CHECK(c.optimizer.kind == OptimizerKind::AdamW);
  CHECK(c.architecture.channels.size() == 2);
  CHECK(parse_run_config(run_config_to_json(c)).seed == 3);
  CHECK(run_config_to_json(parse_run_config(run_config_to_json(c))) == run_config_to_json(c));

  json bad = base;
  bad["unknown"] = 1;
  CHECK_THROWS_AS(parse_run_config(bad), SchemaError);
  bad = base;
  bad["training"]["epoch"] = 4;
  CHECK_THROWS_AS(parse_run_config(bad), SchemaError);
  bad = base;
  bad["output_method"] = "M1";
  bad["siamese"] = {{"enabled", true}};
  CHECK_THROWS_AS(parse_run_config(bad), ConfigError);
  bad = base;
  bad["seed"] = "three";
  CHECK_THROWS_AS(parse_run_config(bad), SchemaError);

  json siamese = base;
  siamese["siamese"] = {{"enabled", true}};
  const RunConfig s = parse_run_config(siamese);
  CHECK(s.optimizer.kind == OptimizerKind::RMSprop);
  CHECK(s.optimizer.learning_rate == 1e-4);
  CHECK(s.optimizer.momentum == 0.9);
  CHECK(s.optimizer.rho == 0.7);
  CHECK(s.siamese.loss.alpha == 0.7);
  CHECK(s.siamese.loss.margin == 0.5);
  CHECK(s.siamese.loss.delta == 2.2);
}

TEST_CASE("trial parameters land in the run configuration") {
  RunConfig c;
  apply_trial(c, json::parse(R"({"dropout": 0.2, "optimizer": "sgdw", "learning_rate": 0.01, "momentum": 0.5,
                                 "kernel": 4, "channels_3": 64, "pool_1": true, "pool_size_1": 3,
                                 "pool_2": false, "loss": "huber"})"));
  CHECK(c.dropout == 0.2);
  CHECK(c.optimizer.kind == OptimizerKind::SGDW);
  CHECK(c.optimizer.learning_rate == 0.01);
  CHECK(c.architecture.kernel == 4);
  CHECK(c.architecture.channels[2] == 64);
  CHECK(c.architecture.pool[0] == 3);
  CHECK(c.architecture.pool[1] == 0);
  CHECK(c.loss == RegressionLoss::Huber);
  CHECK_THROWS_AS(apply_trial(c, json::parse(R"({"channels_9": 8})")), ConfigError);
  CHECK_THROWS_AS(apply_trial(c, json::parse(R"({"flux": 8})")), SchemaError);
}

TEST_CASE("shipped presets mirror the search tables") {
  const SearchSpace layers = cli::load_space("layers");
  CHECK(layers.dimensions.size() == 6 + 3 * 7);
  const SearchSpace training = cli::load_space("training");
  const SearchSpace siamese = cli::load_space("siamese");
  auto find = [](const SearchSpace& s, const std::string& name) -> const Dimension& {
    for (const auto& d : s.dimensions)
      if (d.name == name) return d;
    FAIL("missing dimension " << name);
    throw;
  };
  CHECK(find(layers, "dropout").values().size() == 4);
  CHECK(find(layers, "learning_rate").values().size() == 4);
  CHECK(find(layers, "weight_decay").values().size() == 5);
  CHECK(find(layers, "momentum").values().size() == 10);
  CHECK(find(layers, "kernel").values().size() == 9);
  CHECK(find(layers, "channels_7").values().size() == 32);
  CHECK(find(layers, "pool_4").values().size() == 2);
  CHECK(find(layers, "pool_size_2").values().size() == 2);
  CHECK(find(layers, "optimizer").values().size() == 2);
  CHECK(find(training, "loss").values().size() == 6);
  CHECK(find(training, "optimizer").values().size() == 3);
  CHECK(find(siamese, "alpha").values().size() == 11);
  CHECK(find(siamese, "delta").values().size() == 50);
  CHECK(find(siamese, "margin").values().size() == 6);
  CHECK(find(siamese, "rho").values().size() == 5);
  CHECK(find(siamese, "momentum").values().size() == 5);
  // Every sampled trial is accepted by the configuration.
  Rng rng(1);
  for (const auto* s : {&layers, &training, &siamese}) {
    for (int i = 0; i < 50; ++i) {
      RunConfig c;
      if (s == &siamese) c.siamese.enabled = true;
      CHECK_NOTHROW(apply_trial(c, sample_config(*s, rng)));
    }
  }
  CHECK_THROWS_AS(cli::load_space("no_such_space"), IoError);
}

TEST_CASE("checkpoints round-trip byte for byte and reproduce predictions") {
  Rng rng(4);
  RowMatrix spectra(6, kInputSize), targets(6, kTargetSize);
  for (Eigen::Index i = 0; i < spectra.size(); ++i) spectra.data()[i] = rng.uniform();
  for (Eigen::Index i = 0; i < targets.size(); ++i) targets.data()[i] = rng.normal() * 10;
  const InputTransform in = InputTransform::fit(InputMethod::ZScale1D, spectra);
  const OutputTransformParams out = fit_output(OutputMethod::M3, targets);
  ExtractorConfig arch;
  arch.kernel = 3;
  arch.channels = {4, 6};
  arch.pool = {2, 0};

  RegressionModel m(arch, 63, 0.1, 8);
  const auto bytes = encode_checkpoint(m, in, out, json{{"note", "x"}});
  Checkpoint ck = decode_checkpoint(bytes);
  CHECK(ck.manifest["note"] == "x");
  CHECK(ck.manifest["output_dim"] == 63);
  CHECK(encode_checkpoint(*ck.model, ck.input, ck.output, json{{"note", "x"}}) == bytes);
  CHECK(predict_shapes(m, in, out, spectra) == predict_shapes(*ck.model, ck.input, ck.output, spectra));

  SiameseModel sm(arch, 9);
  const auto sbytes = encode_checkpoint(sm, in, fit_output(OutputMethod::M4, targets));
  Checkpoint sck = decode_checkpoint(sbytes);
  CHECK(sck.model->kind() == ModelKind::Siamese);
  CHECK(encode_checkpoint(*sck.model, sck.input, sck.output) == sbytes);

  auto broken = bytes;
  broken[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(broken), FormatError);
  broken = bytes;
  broken.pop_back();
  CHECK_THROWS_AS(decode_checkpoint(broken), FormatError);
  broken = bytes;
  broken.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(broken), FormatError);
  CHECK_THROWS_AS(load_checkpoint(scratch("missing.ckpt")), IoError);
}

TEST_CASE("train with relative targets records 60 outputs and is reproducible") {
  const json cfg = small_config(shared_dataset());
  const fs::path a = scratch("m4_a.ckpt"), b = scratch("m4_b.ckpt");
  const auto ra = cli::cmd_train(parse_run_config(cfg), a);
  const auto rb = cli::cmd_train(parse_run_config(cfg), b);
  CHECK(ra.manifest["output_dim"] == 60);
  CHECK(ra.manifest["output_transform"]["method"] == "M4");
  CHECK(read_file_bytes(a) == read_file_bytes(b));
  CHECK(read_file_bytes(ra.history_path) == read_file_bytes(rb.history_path));
  CHECK(ra.history.epochs.size() == 3);
}

TEST_CASE("a one-sample dataset trained to zero loss evaluates below 0.1 mm tip error") {
  const fs::path data = scratch("one.bin");
  cli::cmd_generate(1, 77, data, GeneratorConfig{});
  json cfg = small_config(data);
  cfg["split"] = "all";
  cfg["optimizer"] = {{"kind", "adamw"}, {"learning_rate", 0.01}};
  cfg["training"] = {{"epochs", 400}, {"batch_size", 1}, {"early_stopping", false}};
  const fs::path ck = scratch("one.ckpt");
  const auto r = cli::cmd_train(parse_run_config(cfg), ck);
  CHECK(r.history.epochs.back().train_loss < 1e-3);
  const auto e = cli::cmd_eval(ck, data, "all");
  REQUIRE(e.reports.size() == 1);
  CHECK(e.reports[0].tip_error < 0.1);
}

TEST_CASE("eval writes one report row per test sample") {
  const json cfg = small_config(shared_dataset());
  const fs::path ck = scratch("eval.ckpt"), rep = scratch("eval.csv");
  cli::cmd_train(parse_run_config(cfg), ck);
  const auto e = cli::cmd_eval(ck, shared_dataset(), "test", rep);
  CHECK(e.reports.size() == 12);
  std::ifstream in(rep);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') ++rows;
  CHECK(rows == 13);
  for (const auto& r : e.reports) CHECK(r.per_marker.size() == 20);
  CHECK_THROWS_AS(cli::cmd_eval(ck, shared_dataset(), "holdout"), ConfigError);
}

TEST_CASE("pairs diagnostics") {
  const fs::path out = scratch("pairs.csv");
  const auto p = cli::cmd_pairs(shared_dataset(), 10000, 2, out);
  CHECK(p.sampled == 120 * 119 / 2);
  CHECK(p.thresholds.t_low < p.thresholds.t_high);
  CHECK(p.counts.genuine > 0);
  std::ifstream in(out);
  std::string first;
  std::getline(in, first);
  CHECK(first.rfind("# sampled_pairs", 0) == 0);
  CHECK_THROWS_AS(cli::cmd_pairs(shared_dataset(), 0, 2), ConfigError);
}

TEST_CASE("the command-line tool maps error kinds to exit codes") {
  const std::string data = shared_dataset().string();
  CHECK(run_cli("pairs --dataset " + data + " --budget 1000") == 0);
  CHECK(run_cli("pairs --dataset " + scratch("absent.bin").string()) == static_cast<int>(ErrorKind::Io));
  const fs::path bad = scratch("bad.bin");
  {
    std::ofstream f(bad, std::ios::binary);
    f << "NOPE and some more bytes to pass the length check of the header....";
  }
  CHECK(run_cli("pairs --dataset " + bad.string()) == static_cast<int>(ErrorKind::Format));
  const fs::path cfg = scratch("bad.json");
  {
    std::ofstream f(cfg);
    f << R"({"datasett": "x"})";
  }
  CHECK(run_cli("train --config " + cfg.string() + " --out-checkpoint " + scratch("x.ckpt").string()) ==
        static_cast<int>(ErrorKind::Schema));
  CHECK(run_cli("pairs --dataset " + data + " --budget 0") == static_cast<int>(ErrorKind::Config));
  CHECK(run_cli("frobnicate") != 0);
}
