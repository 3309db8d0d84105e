#pragma once

// Phenomenological edge-FBG forward model. Each sensing plane carries three
// co-located gratings; bending at a plane scales each grating's reflected
// peak by the projection of the curvature vector onto the grating's edge
// angle. A curvature-dependent attenuation envelope and polarization ripple
// entangle the spectrum profile with the shape.

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "json.hpp"

#include "efbg/dataset.hpp"
#include "efbg/geometry.hpp"
#include "efbg/random.hpp"

namespace efbg {

inline constexpr std::size_t kPlanes = 5;
inline constexpr std::size_t kEdgesPerPlane = 3;
inline constexpr std::size_t kGratings = kPlanes * kEdgesPerPlane;

struct SensorLayout {
  std::array<double, kPlanes> plane_positions{};         // mm along the sensor
  std::array<double, kGratings> bragg_centers{};         // nm, plane-major
  std::array<double, kEdgesPerPlane> edge_angles{};      // rad: left, top, right
  std::array<double, kGratings> base_amplitudes{};       // a.u.
  double peak_width = 0.8;                               // nm, Gaussian sigma
  double coupling_gain = 30.0;                           // mm
  double clip_floor = 0.05;                              // fraction of base amplitude
  std::size_t grid_points = kWavelengths;
  double grid_start = kWavelengthStart;
  double grid_end = kWavelengthEnd;

  static SensorLayout standard();
  void validate() const;
  double wavelength(std::size_t i) const;
};

struct NoiseModel {
  double additive_sigma = 0.01;
  double temporal_jitter_sigma = 0.02;
  double polarization_ripple_amp = 0.05;
  double attenuation_coeff = 0.5;     // per (1/mm * nm)
  double ripple_period = 20.0;        // nm
  double ripple_phase_gain = 100.0;   // rad per (1/mm)

  static NoiseModel none();
  void validate() const;
};

struct ShapeSampler {
  std::size_t segments = kPlanes;
  double total_length = kSensorLength;
  double curvature_min = 0.0;
  double curvature_max = 0.02;
  double base_offset_sigma = 0.5;  // mm, isotropic jitter of the sensor base

  void validate() const;
  ShapeParams sample(Rng& rng) const;
};

struct SpectrumSample {
  std::vector<double> intensities;  // kSpectra x grid_points, spectrum-major
  MarkerChain shape_ref;
};

/// A = A0 * (1 + g * kappa * cos(theta - phi)), floored at clip_floor * A0.
double peak_amplitude(double base, double gain, double curvature, double bend_direction,
                      double edge_angle, double clip_floor);

/// Peak amplitudes of the 15 gratings for a shape, plane-major.
std::array<double, kGratings> grating_amplitudes(const ShapeParams& shape,
                                                 const SensorLayout& layout);

/// Mean plane curvature, the driver of the envelope and ripple terms.
double mean_plane_curvature(const ShapeParams& shape, const SensorLayout& layout);

/// One noise-free spectrum: Gaussian peaks times attenuation times ripple.
std::vector<double> render_spectrum(const std::array<double, kGratings>& amplitudes,
                                    double mean_curvature, const SensorLayout& layout,
                                    const NoiseModel& noise);

/// Shape with curvature and direction perturbed by the temporal jitter.
ShapeParams jitter_shape(const ShapeParams& shape, double sigma, Rng& rng);

SpectrumSample simulate_spectrum(const ShapeParams& shape, const SensorLayout& layout,
                                 const NoiseModel& noise, std::uint64_t seed);

struct GeneratorConfig {
  ShapeSampler sampler;
  SensorLayout layout = SensorLayout::standard();
  NoiseModel noise;
};

/// Sample i draws from its own stream derive_seed(seed, i), so output does
/// not depend on generation order.
Dataset generate_dataset(std::size_t n, std::uint64_t seed, const GeneratorConfig& config);

void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);

}  // namespace efbg
