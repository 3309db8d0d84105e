#pragma once

// The regression CNN and its Siamese extension. Models own their parameters
// at stable addresses (they are neither copyable nor movable), so optimizers
// and tapes may hold raw pointers for the model's lifetime.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "efbg/autodiff.hpp"
#include "efbg/geometry.hpp"
#include "efbg/preprocess.hpp"

namespace efbg {

using Param = ad::Parameter<float>;
using FTensor = ad::Tensor<float>;
using FVar = ad::Var<float>;
using FTape = ad::Tape<float>;

/// Convolutional feature extractor layout.
struct ExtractorConfig {
  std::size_t in_channels = 3;
  std::size_t in_length = 125;
  std::size_t kernel = 10;
  std::vector<std::size_t> channels;  // one entry per conv layer
  std::vector<std::size_t> pool;      // per conv layer: 0 = none, else window size

  /// Seven layers (176, 120, 48, 96, 48, 232, 224), kernel 10, pools of
  /// 2, 2, 2, 3 after layers 2, 3, 5 and 7.
  static ExtractorConfig reference();

  void validate() const;
  /// Sequence length after every conv block (pooling included).
  std::vector<std::size_t> length_trace() const;
  std::size_t output_length() const;
  std::size_t feature_length() const;  // channels.back() * output_length()
  std::size_t parameter_count() const;
};

void to_json(nlohmann::json& j, const ExtractorConfig& c);
void from_json(const nlohmann::json& j, ExtractorConfig& c);

/// A named non-trainable tensor (batch-norm running statistics).
struct Buffer {
  std::string name;
  FTensor* tensor;
};

/// conv -> sigmoid -> batchnorm [-> maxpool], repeated.
class FeatureExtractor {
 public:
  FeatureExtractor(const ExtractorConfig& config, std::uint64_t seed);
  FeatureExtractor(const FeatureExtractor&) = delete;
  FeatureExtractor& operator=(const FeatureExtractor&) = delete;

  /// x [batch, in_channels, in_length] -> flattened features [batch, feature_length].
  FVar forward(FTape& tape, FVar x, ad::Mode mode);

  const ExtractorConfig& config() const noexcept { return config_; }
  void collect(std::vector<Param*>& params, std::vector<Buffer>& buffers);

 private:
  struct Block {
    Param w, b, gamma, beta;
    ad::BatchNormState<float> bn;
    std::size_t pool = 0;
  };
  ExtractorConfig config_;
  std::vector<Block> blocks_;
};

/// Leaf for a parameter: differentiable in training mode, a plain constant
/// (no closures, no cached activations) in inference mode.
FVar leaf(FTape& tape, Param& p, ad::Mode mode);

/// Fills `p` with Xavier-uniform values; fan sizes follow the usual
/// receptive-field convention for convolutions.
void xavier_uniform(Param& p, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed);

enum class ModelKind { Regression, Siamese };
const char* to_string(ModelKind k);
ModelKind parse_model_kind(const std::string& s);

class Model {
 public:
  virtual ~Model() = default;

  virtual ModelKind kind() const noexcept = 0;
  virtual std::size_t output_dim() const noexcept = 0;
  virtual const ExtractorConfig& extractor_config() const noexcept = 0;

  /// Single-arm prediction in transformed output space, [batch, output_dim].
  virtual FVar forward(FTape& tape, const FTensor& x, ad::Mode mode, std::uint64_t dropout_seed = 0) = 0;

  /// Parameters and buffers in a fixed serialization order.
  std::vector<Param*> parameters();
  std::vector<Buffer> buffers();
  std::size_t parameter_count();

  /// Copies of every parameter value and buffer, in serialization order.
  std::vector<FTensor> snapshot();
  void restore(const std::vector<FTensor>& state);

 protected:
  virtual void collect(std::vector<Param*>& params, std::vector<Buffer>& buffers) = 0;
};

/// Extractor, optional dropout after flatten, and a linear dense output.
class RegressionModel final : public Model {
 public:
  /// output_dim must be 60 (relative targets) or 63 (absolute targets).
  RegressionModel(const ExtractorConfig& config, std::size_t output_dim, double dropout_rate,
                  std::uint64_t seed);

  ModelKind kind() const noexcept override { return ModelKind::Regression; }
  std::size_t output_dim() const noexcept override { return output_dim_; }
  const ExtractorConfig& extractor_config() const noexcept override { return extractor_.config(); }
  double dropout_rate() const noexcept { return dropout_; }

  FVar forward(FTape& tape, const FTensor& x, ad::Mode mode, std::uint64_t dropout_seed = 0) override;

 protected:
  void collect(std::vector<Param*>& params, std::vector<Buffer>& buffers) override;

 private:
  FeatureExtractor extractor_;
  std::size_t output_dim_;
  double dropout_;
  Param w_, b_;
};

struct SiameseOutputs {
  FVar y_a;     // [batch, 60]
  FVar y_b;     // [batch, 60]
  FVar y_pred;  // [batch, 1], in (0, 1)
};

/// One shared extractor; a distance head (euclid -> batchnorm -> dense(1) ->
/// sigmoid) and a shared regression branch (dense(feature) + sigmoid -> dense(60)).
class SiameseModel final : public Model {
 public:
  static constexpr std::size_t kOutputDim = 60;

  SiameseModel(const ExtractorConfig& config, std::uint64_t seed);

  ModelKind kind() const noexcept override { return ModelKind::Siamese; }
  std::size_t output_dim() const noexcept override { return kOutputDim; }
  const ExtractorConfig& extractor_config() const noexcept override { return extractor_.config(); }

  SiameseOutputs forward_siamese(FTape& tape, const FTensor& xa, const FTensor& xb, ad::Mode mode);
  FVar forward(FTape& tape, const FTensor& x, ad::Mode mode, std::uint64_t dropout_seed = 0) override;

  /// The extractor both arms run through; exposed for weight-sharing checks.
  const FeatureExtractor& extractor() const noexcept { return extractor_; }

 protected:
  void collect(std::vector<Param*>& params, std::vector<Buffer>& buffers) override;

 private:
  FVar branch(FTape& tape, FVar features, ad::Mode mode);

  FeatureExtractor extractor_;
  Param head_gamma_, head_beta_, head_w_, head_b_;
  ad::BatchNormState<float> head_bn_;
  Param hidden_w_, hidden_b_, out_w_, out_b_;
};

/// Converts raw spectra rows (375 values each) into a network input batch
/// after applying the fitted input transform.
FTensor make_input_batch(const RowMatrix& transformed_rows, const std::vector<std::size_t>& rows,
                         const ExtractorConfig& config);

/// Inference in batches: input transform, single-arm forward, output inverse.
/// `anchors` (rows x 3, true first markers) is required for relative targets.
/// Returns absolute marker coordinates, one 63-value row per input row.
RowMatrix predict_shapes(Model& model, const InputTransform& input, const OutputTransformParams& output,
                         const RowMatrix& spectra, const RowMatrix& anchors = {},
                         std::size_t batch_size = 64);

MarkerChain predict_shape(Model& model, const InputTransform& input, const OutputTransformParams& output,
                          const Eigen::RowVectorXd& spectrum, const Vec3& anchor = Vec3::Zero());

/// Rows of 63 coordinates to chains and back.
MarkerChain row_to_chain(const Eigen::Ref<const Eigen::RowVectorXd>& row);

}  // namespace efbg
