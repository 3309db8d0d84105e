#pragma once

// DatasetFile: a 40-byte little-endian header followed by fixed-size sample
// records (3 x 125 f32 intensities, then 21 x 3 f32 marker coordinates).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "json.hpp"

#include "efbg/geometry.hpp"

namespace efbg {

inline constexpr std::size_t kSpectra = 3;
inline constexpr std::size_t kWavelengths = 125;
inline constexpr std::size_t kInputSize = kSpectra * kWavelengths;
inline constexpr std::size_t kTargetSize = kMarkerCount * 3;
inline constexpr double kWavelengthStart = 812.0;  // nm
inline constexpr double kWavelengthEnd = 871.0;    // nm

inline constexpr char kDatasetMagic[4] = {'E', 'F', 'B', 'G'};
inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::size_t kDatasetHeaderBytes = 40;

struct Dataset {
  std::size_t n_samples = 0;
  std::vector<float> spectra;  // n x 375
  std::vector<float> targets;  // n x 63, mm
  double wavelength_start = kWavelengthStart;
  double wavelength_end = kWavelengthEnd;

  std::span<const float> spectrum(std::size_t i) const {
    return {spectra.data() + i * kInputSize, kInputSize};
  }
  std::span<const float> target(std::size_t i) const {
    return {targets.data() + i * kTargetSize, kTargetSize};
  }
  MarkerChain chain(std::size_t i) const;
  void append(std::span<const double> intensities, const MarkerChain& chain);
};

std::uint64_t dataset_file_size(std::size_t n_samples);

std::vector<std::uint8_t> encode_dataset(const Dataset& ds);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);

void write_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& dataset_path);

// Shared helpers for whole-file binary I/O with path context in errors.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// 64-bit FNV-1a; used for config digests, not for security.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);
std::string digest_hex(const nlohmann::json& j);

}  // namespace efbg
