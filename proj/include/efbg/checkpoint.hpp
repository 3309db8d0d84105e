#pragma once

// ModelCheckpoint: the 8-byte magic "EFBGCKPT", a little-endian u64 manifest
// length, the JSON manifest, then every tensor listed in the manifest as
// little-endian f32 values in manifest order.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "json.hpp"

#include "efbg/model.hpp"
#include "efbg/preprocess.hpp"

namespace efbg {

inline constexpr char kCheckpointMagic[8] = {'E', 'F', 'B', 'G', 'C', 'K', 'P', 'T'};
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::unique_ptr<Model> model;
  InputTransform input;
  OutputTransformParams output;
  nlohmann::json manifest;
};

/// `extra` is merged into the manifest (run configuration, digests).
std::vector<std::uint8_t> encode_checkpoint(Model& model, const InputTransform& input,
                                            const OutputTransformParams& output,
                                            const nlohmann::json& extra = nlohmann::json::object());
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, Model& model, const InputTransform& input,
                     const OutputTransformParams& output, const nlohmann::json& extra = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace efbg
