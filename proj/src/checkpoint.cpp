#include "efbg/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "efbg/dataset.hpp"
#include "efbg/error.hpp"

namespace efbg {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

struct NamedTensor {
  std::string name;
  FTensor* tensor;
};

std::vector<NamedTensor> tensors_of(Model& model) {
  std::vector<NamedTensor> out;
  for (auto* p : model.parameters()) out.push_back({p->name, &p->value});
  for (const auto& b : model.buffers()) out.push_back({b.name, b.tensor});
  return out;
}

std::unique_ptr<Model> build_model(const json& m) {
  const ModelKind kind = parse_model_kind(m.at("kind").get<std::string>());
  const auto arch = m.at("architecture").get<ExtractorConfig>();
  if (kind == ModelKind::Siamese) return std::make_unique<SiameseModel>(arch, 0);
  return std::make_unique<RegressionModel>(arch, m.at("output_dim").get<std::size_t>(),
                                           m.value("dropout", 0.0), 0);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(Model& model, const InputTransform& input,
                                            const OutputTransformParams& output, const json& extra) {
  json m = extra.is_object() ? extra : json::object();
  m["format_version"] = kCheckpointVersion;
  m["kind"] = to_string(model.kind());
  m["output_dim"] = model.output_dim();
  m["architecture"] = model.extractor_config();
  if (auto* r = dynamic_cast<RegressionModel*>(&model)) m["dropout"] = r->dropout_rate();
  m["input_transform"] = input;
  m["output_transform"] = output;
  json list = json::array();
  const auto tensors = tensors_of(model);
  for (const auto& t : tensors) list.push_back({{"name", t.name}, {"shape", t.tensor->shape}});
  m["tensors"] = list;

  const std::string text = m.dump();
  std::vector<std::uint8_t> out(sizeof kCheckpointMagic + 8 + text.size());
  std::memcpy(out.data(), kCheckpointMagic, sizeof kCheckpointMagic);
  const std::uint64_t len = text.size();
  std::memcpy(out.data() + sizeof kCheckpointMagic, &len, 8);
  std::memcpy(out.data() + sizeof kCheckpointMagic + 8, text.data(), text.size());
  for (const auto& t : tensors) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.tensor->data.data());
    out.insert(out.end(), p, p + t.tensor->data.size() * sizeof(float));
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t head = sizeof kCheckpointMagic + 8;
  if (bytes.size() < head || std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw FormatError("not a checkpoint (bad magic)");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + sizeof kCheckpointMagic, 8);
  if (len > bytes.size() - head) throw FormatError("checkpoint manifest is truncated");

  Checkpoint c;
  try {
    c.manifest = json::parse(bytes.begin() + head, bytes.begin() + static_cast<std::ptrdiff_t>(head + len));
    if (c.manifest.at("format_version").get<int>() != kCheckpointVersion) {
      throw FormatError("unsupported checkpoint version " + c.manifest.at("format_version").dump());
    }
    c.model = build_model(c.manifest);
    c.input = c.manifest.at("input_transform").get<InputTransform>();
    c.output = c.manifest.at("output_transform").get<OutputTransformParams>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint manifest: ") + e.what());
  }

  const auto tensors = tensors_of(*c.model);
  const json& list = c.manifest.at("tensors");
  if (list.size() != tensors.size()) {
    throw FormatError("checkpoint lists " + std::to_string(list.size()) + " tensors, model has " +
                      std::to_string(tensors.size()));
  }
  std::size_t offset = head + len;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& t = tensors[i];
    if (list[i].at("name") != t.name || list[i].at("shape").get<ad::Shape>() != t.tensor->shape) {
      throw FormatError("checkpoint tensor " + std::to_string(i) + " (" + list[i].at("name").get<std::string>() +
                        ") does not match model tensor " + t.name);
    }
    const std::size_t n = t.tensor->data.size() * sizeof(float);
    if (bytes.size() - offset < n) throw FormatError("checkpoint tensor data is truncated at " + t.name);
    std::memcpy(t.tensor->data.data(), bytes.data() + offset, n);
    offset += n;
  }
  if (offset != bytes.size()) throw FormatError("checkpoint has trailing bytes");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, Model& model, const InputTransform& input,
                     const OutputTransformParams& output, const json& extra) {
  write_file_bytes(path, encode_checkpoint(model, input, output, extra));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace efbg
