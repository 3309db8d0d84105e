#include "efbg/model.hpp"

#include <cmath>
#include <numeric>

#include "efbg/error.hpp"
#include "efbg/json_util.hpp"
#include "efbg/random.hpp"

namespace efbg {

// ---- config -----------------------------------------------------------------

ExtractorConfig ExtractorConfig::reference() {
  ExtractorConfig c;
  c.channels = {176, 120, 48, 96, 48, 232, 224};
  c.pool = {0, 2, 2, 0, 2, 0, 3};
  c.kernel = 10;
  return c;
}

void ExtractorConfig::validate() const {
  if (in_channels == 0 || in_length == 0) throw ConfigError("extractor: empty input");
  if (channels.empty()) throw ConfigError("extractor: at least one conv layer is required");
  if (pool.size() != channels.size()) {
    throw ConfigError("extractor: pool list has " + std::to_string(pool.size()) + " entries for " +
                      std::to_string(channels.size()) + " conv layers");
  }
  if (kernel == 0) throw ConfigError("extractor: kernel must be positive");
  for (auto c : channels)
    if (c == 0) throw ConfigError("extractor: channel counts must be positive");
  for (auto p : pool)
    if (p == 1) throw ConfigError("extractor: pool size must be 0 (none) or >= 2");
  std::size_t len = in_length;
  for (auto p : pool) {
    if (kernel > len + kernel - 1) throw ConfigError("extractor: kernel larger than padded input");
    if (p > 0) len = (len + p - 1) / p;
  }
}

std::vector<std::size_t> ExtractorConfig::length_trace() const {
  std::vector<std::size_t> out;
  std::size_t len = in_length;
  for (auto p : pool) {
    if (p > 0) len = (len + p - 1) / p;
    out.push_back(len);
  }
  return out;
}

std::size_t ExtractorConfig::output_length() const {
  const auto t = length_trace();
  return t.empty() ? in_length : t.back();
}

std::size_t ExtractorConfig::feature_length() const {
  return channels.empty() ? 0 : channels.back() * output_length();
}

std::size_t ExtractorConfig::parameter_count() const {
  std::size_t n = 0, cin = in_channels;
  for (auto c : channels) {
    n += c * cin * kernel + c + 2 * c;
    cin = c;
  }
  return n;
}

void to_json(nlohmann::json& j, const ExtractorConfig& c) {
  j = {{"in_channels", c.in_channels},
       {"in_length", c.in_length},
       {"kernel", c.kernel},
       {"channels", c.channels},
       {"pool", c.pool}};
}

void from_json(const nlohmann::json& j, ExtractorConfig& c) {
  constexpr std::string_view ctx = "architecture";
  if (j.is_string()) {
    if (j.get<std::string>() != "reference") throw SchemaError("architecture: unknown preset '" + j.get<std::string>() + "'");
    c = ExtractorConfig::reference();
    return;
  }
  reject_unknown_keys(j, {"in_channels", "in_length", "kernel", "channels", "pool"}, ctx);
  c = ExtractorConfig::reference();
  read_opt(j, "in_channels", c.in_channels, ctx);
  read_opt(j, "in_length", c.in_length, ctx);
  read_opt(j, "kernel", c.kernel, ctx);
  read_opt(j, "channels", c.channels, ctx);
  read_opt(j, "pool", c.pool, ctx);
}

// ---- layers -----------------------------------------------------------------

FVar leaf(FTape& tape, Param& p, ad::Mode mode) {
  return mode == ad::Mode::Train ? tape.parameter(p) : tape.constant(p.value);
}

void xavier_uniform(Param& p, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
  Rng rng(seed);
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : p.value.data) v = static_cast<float>(rng.uniform(-limit, limit));
}

namespace {

Param zeros(std::string name, ad::Shape shape) { return Param(std::move(name), FTensor(std::move(shape))); }
Param ones(std::string name, ad::Shape shape) {
  return Param(std::move(name), FTensor(std::move(shape), 1.0f));
}

}  // namespace

FeatureExtractor::FeatureExtractor(const ExtractorConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  blocks_.reserve(config_.channels.size());
  std::size_t cin = config_.in_channels;
  const std::size_t k = config_.kernel;
  for (std::size_t i = 0; i < config_.channels.size(); ++i) {
    const std::size_t co = config_.channels[i];
    const std::string n = "conv" + std::to_string(i + 1);
    Block b{zeros(n + ".w", {co, cin, k}), zeros(n + ".b", {co}),
            ones("bn" + std::to_string(i + 1) + ".gamma", {co}),
            zeros("bn" + std::to_string(i + 1) + ".beta", {co}), ad::BatchNormState<float>(co),
            config_.pool[i]};
    xavier_uniform(b.w, cin * k, co * k, derive_seed(seed, i));
    blocks_.push_back(std::move(b));
    cin = co;
  }
}

FVar FeatureExtractor::forward(FTape& tape, FVar x, ad::Mode mode) {
  const auto& s = x.shape();
  if (s.size() != 3 || s[1] != config_.in_channels || s[2] != config_.in_length) {
    throw ShapeError("extractor: expected input [batch, " + std::to_string(config_.in_channels) + ", " +
                     std::to_string(config_.in_length) + "], got " + ad::to_string(s));
  }
  for (auto& b : blocks_) {
    x = ad::conv1d(x, leaf(tape, b.w, mode), leaf(tape, b.b, mode));
    x = ad::sigmoid(x);
    x = ad::batchnorm1d(x, leaf(tape, b.gamma, mode), leaf(tape, b.beta, mode), b.bn, mode);
    if (b.pool > 0) x = ad::maxpool1d(x, b.pool);
  }
  return ad::flatten(x);
}

void FeatureExtractor::collect(std::vector<Param*>& params, std::vector<Buffer>& buffers) {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    auto& b = blocks_[i];
    for (Param* p : {&b.w, &b.b, &b.gamma, &b.beta}) params.push_back(p);
    const std::string bn = "bn" + std::to_string(i + 1);
    buffers.push_back({bn + ".running_mean", &b.bn.running_mean});
    buffers.push_back({bn + ".running_var", &b.bn.running_var});
  }
}

// ---- model base ---------------------------------------------------------------

const char* to_string(ModelKind k) { return k == ModelKind::Regression ? "regression" : "siamese"; }

ModelKind parse_model_kind(const std::string& s) {
  if (s == "regression") return ModelKind::Regression;
  if (s == "siamese") return ModelKind::Siamese;
  throw FormatError("unknown model kind '" + s + "'");
}

std::vector<Param*> Model::parameters() {
  std::vector<Param*> p;
  std::vector<Buffer> b;
  collect(p, b);
  return p;
}

std::vector<Buffer> Model::buffers() {
  std::vector<Param*> p;
  std::vector<Buffer> b;
  collect(p, b);
  return b;
}

std::size_t Model::parameter_count() {
  std::size_t n = 0;
  for (auto* p : parameters()) n += p->value.size();
  return n;
}

std::vector<FTensor> Model::snapshot() {
  std::vector<FTensor> out;
  for (auto* p : parameters()) out.push_back(p->value);
  for (auto& b : buffers()) out.push_back(*b.tensor);
  return out;
}

void Model::restore(const std::vector<FTensor>& state) {
  auto params = parameters();
  auto bufs = buffers();
  if (state.size() != params.size() + bufs.size()) {
    throw ShapeError("restore: expected " + std::to_string(params.size() + bufs.size()) +
                     " tensors, got " + std::to_string(state.size()));
  }
  std::size_t i = 0;
  auto assign = [&](FTensor& dst, const std::string& name) {
    if (dst.shape != state[i].shape) {
      throw ShapeError("restore: '" + name + "' has shape " + ad::to_string(dst.shape) + ", state holds " +
                       ad::to_string(state[i].shape));
    }
    dst.data = state[i++].data;
  };
  for (auto* p : params) assign(p->value, p->name);
  for (auto& b : bufs) assign(*b.tensor, b.name);
}

// ---- regression -----------------------------------------------------------------

RegressionModel::RegressionModel(const ExtractorConfig& config, std::size_t output_dim,
                                 double dropout_rate, std::uint64_t seed)
    : extractor_(config, derive_seed(seed, 0)),
      output_dim_(output_dim),
      dropout_(dropout_rate),
      w_(zeros("dense.w", {output_dim, config.feature_length()})),
      b_(zeros("dense.b", {output_dim})) {
  if (output_dim != 60 && output_dim != 63) {
    throw ConfigError("regression output dimension must be 60 or 63, got " + std::to_string(output_dim));
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  xavier_uniform(w_, config.feature_length(), output_dim, derive_seed(seed, 1));
}

FVar RegressionModel::forward(FTape& tape, const FTensor& x, ad::Mode mode, std::uint64_t dropout_seed) {
  FVar f = extractor_.forward(tape, tape.constant(x), mode);
  if (dropout_ > 0.0) f = ad::dropout(f, dropout_, mode, dropout_seed);
  return ad::dense(f, leaf(tape, w_, mode), leaf(tape, b_, mode));
}

void RegressionModel::collect(std::vector<Param*>& params, std::vector<Buffer>& buffers) {
  extractor_.collect(params, buffers);
  params.push_back(&w_);
  params.push_back(&b_);
}

// ---- siamese ----------------------------------------------------------------------

SiameseModel::SiameseModel(const ExtractorConfig& config, std::uint64_t seed)
    : extractor_(config, derive_seed(seed, 0)),
      head_gamma_(ones("head.bn.gamma", {1})),
      head_beta_(zeros("head.bn.beta", {1})),
      head_w_(zeros("head.dense.w", {1, 1})),
      head_b_(zeros("head.dense.b", {1})),
      head_bn_(1),
      hidden_w_(zeros("branch.hidden.w", {config.feature_length(), config.feature_length()})),
      hidden_b_(zeros("branch.hidden.b", {config.feature_length()})),
      out_w_(zeros("branch.out.w", {kOutputDim, config.feature_length()})),
      out_b_(zeros("branch.out.b", {kOutputDim})) {
  const std::size_t f = config.feature_length();
  xavier_uniform(head_w_, 1, 1, derive_seed(seed, 1));
  xavier_uniform(hidden_w_, f, f, derive_seed(seed, 2));
  xavier_uniform(out_w_, f, kOutputDim, derive_seed(seed, 3));
}

FVar SiameseModel::branch(FTape& tape, FVar features, ad::Mode mode) {
  FVar h = ad::sigmoid(ad::dense(features, leaf(tape, hidden_w_, mode), leaf(tape, hidden_b_, mode)));
  return ad::dense(h, leaf(tape, out_w_, mode), leaf(tape, out_b_, mode));
}

SiameseOutputs SiameseModel::forward_siamese(FTape& tape, const FTensor& xa, const FTensor& xb,
                                             ad::Mode mode) {
  if (xa.shape != xb.shape) {
    throw ShapeError("forward_siamese: arm inputs " + ad::to_string(xa.shape) + " and " +
                     ad::to_string(xb.shape) + " differ");
  }
  FVar fa = extractor_.forward(tape, tape.constant(xa), mode);
  FVar fb = extractor_.forward(tape, tape.constant(xb), mode);
  FVar d = ad::euclid_dist(fa, fb);
  d = ad::batchnorm1d(d, leaf(tape, head_gamma_, mode), leaf(tape, head_beta_, mode), head_bn_, mode);
  FVar y_pred = ad::sigmoid(ad::dense(d, leaf(tape, head_w_, mode), leaf(tape, head_b_, mode)));
  return {branch(tape, fa, mode), branch(tape, fb, mode), y_pred};
}

FVar SiameseModel::forward(FTape& tape, const FTensor& x, ad::Mode mode, std::uint64_t) {
  return branch(tape, extractor_.forward(tape, tape.constant(x), mode), mode);
}

void SiameseModel::collect(std::vector<Param*>& params, std::vector<Buffer>& buffers) {
  extractor_.collect(params, buffers);
  for (Param* p : {&head_gamma_, &head_beta_, &head_w_, &head_b_, &hidden_w_, &hidden_b_, &out_w_, &out_b_})
    params.push_back(p);
  buffers.push_back({"head.bn.running_mean", &head_bn_.running_mean});
  buffers.push_back({"head.bn.running_var", &head_bn_.running_var});
}

// ---- inference ----------------------------------------------------------------------

FTensor make_input_batch(const RowMatrix& transformed_rows, const std::vector<std::size_t>& rows,
                         const ExtractorConfig& config) {
  const std::size_t width = config.in_channels * config.in_length;
  if (static_cast<std::size_t>(transformed_rows.cols()) != width) {
    throw ShapeError("input rows have " + std::to_string(transformed_rows.cols()) + " values, expected " +
                     std::to_string(width));
  }
  FTensor x(ad::Shape{rows.size(), config.in_channels, config.in_length});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double* src = transformed_rows.row(static_cast<Eigen::Index>(rows[i])).data();
    float* dst = x.data.data() + i * width;
    for (std::size_t k = 0; k < width; ++k) dst[k] = static_cast<float>(src[k]);
  }
  return x;
}

RowMatrix predict_shapes(Model& model, const InputTransform& input, const OutputTransformParams& output,
                         const RowMatrix& spectra, const RowMatrix& anchors, std::size_t batch_size) {
  if (output.output_dim() != model.output_dim()) {
    throw ConfigError("output transform " + std::string(to_string(output.method)) + " expects " +
                      std::to_string(output.output_dim()) + " outputs but the model produces " +
                      std::to_string(model.output_dim()));
  }
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  const RowMatrix x = input.apply(spectra);
  const std::size_t n = static_cast<std::size_t>(x.rows());
  RowMatrix z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(model.output_dim()));
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t stop = std::min(n, start + batch_size);
    std::vector<std::size_t> rows(stop - start);
    std::iota(rows.begin(), rows.end(), start);
    FTape tape;
    FVar y = model.forward(tape, make_input_batch(x, rows, model.extractor_config()), ad::Mode::Infer);
    const auto& v = y.value();
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < model.output_dim(); ++j)
        z(static_cast<Eigen::Index>(start + i), static_cast<Eigen::Index>(j)) = v[i * model.output_dim() + j];
  }
  return invert_output(output, z, anchors);
}

MarkerChain predict_shape(Model& model, const InputTransform& input, const OutputTransformParams& output,
                          const Eigen::RowVectorXd& spectrum, const Vec3& anchor) {
  RowMatrix s = spectrum;
  RowMatrix a(1, 3);
  a << anchor.x(), anchor.y(), anchor.z();
  RowMatrix p = predict_shapes(model, input, output, s, a, 1);
  return row_to_chain(p.row(0));
}

MarkerChain row_to_chain(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  if (row.size() != static_cast<Eigen::Index>(3 * kMarkerCount)) {
    throw ShapeError("expected " + std::to_string(3 * kMarkerCount) + " coordinates, got " +
                     std::to_string(row.size()));
  }
  MarkerChain c;
  for (std::size_t k = 0; k < kMarkerCount; ++k) c.positions.emplace_back(row(3 * k), row(3 * k + 1), row(3 * k + 2));
  return c;
}

}  // namespace efbg
