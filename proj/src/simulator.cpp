#include "efbg/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "efbg/error.hpp"
#include "efbg/json_util.hpp"

namespace efbg {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_angle(double a) {
  a = std::fmod(a, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  if (a >= kTwoPi) a = 0.0;
  return a;
}

void require_nonneg(double v, const char* name) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw DomainError(std::string(name) + " must be finite and non-negative");
  }
}

}  // namespace

// ---- layout ----------------------------------------------------------------

SensorLayout SensorLayout::standard() {
  SensorLayout l;
  for (std::size_t p = 0; p < kPlanes; ++p) {
    l.plane_positions[p] = (static_cast<double>(p) + 0.5) * kSensorLength / kPlanes;
  }
  const double span = kWavelengthEnd - kWavelengthStart;
  for (std::size_t g = 0; g < kGratings; ++g) {
    l.bragg_centers[g] = kWavelengthStart + span * (static_cast<double>(g) + 0.5) / kGratings;
  }
  l.edge_angles = {std::numbers::pi, 0.5 * std::numbers::pi, 0.0};
  l.base_amplitudes.fill(1.0);
  return l;
}

void SensorLayout::validate() const {
  if (grid_points != kWavelengths) {
    throw DomainError("wavelength grid must have " + std::to_string(kWavelengths) + " points");
  }
  if (!(grid_end > grid_start)) throw DomainError("wavelength grid must be increasing");
  if (!(peak_width > 0.0)) throw DomainError("peak width must be positive");
  require_nonneg(coupling_gain, "coupling gain");
  require_nonneg(clip_floor, "clip floor");
  for (std::size_t g = 0; g < kGratings; ++g) {
    if (bragg_centers[g] < grid_start || bragg_centers[g] > grid_end) {
      throw DomainError("Bragg center " + std::to_string(g) + " lies outside the grid");
    }
    if (g > 0 && !(bragg_centers[g] - bragg_centers[g - 1] >= 3.0 * peak_width)) {
      throw DomainError("Bragg centers " + std::to_string(g - 1) + " and " + std::to_string(g) +
                        " are closer than three peak widths");
    }
    require_nonneg(base_amplitudes[g], "base amplitude");
  }
  for (double s : plane_positions) require_nonneg(s, "plane position");
}

double SensorLayout::wavelength(std::size_t i) const {
  return grid_start + (grid_end - grid_start) * static_cast<double>(i) /
                          static_cast<double>(grid_points - 1);
}

NoiseModel NoiseModel::none() {
  NoiseModel n;
  n.additive_sigma = 0.0;
  n.temporal_jitter_sigma = 0.0;
  return n;
}

void NoiseModel::validate() const {
  require_nonneg(additive_sigma, "additive sigma");
  require_nonneg(temporal_jitter_sigma, "temporal jitter sigma");
  require_nonneg(polarization_ripple_amp, "polarization ripple amplitude");
  require_nonneg(attenuation_coeff, "attenuation coefficient");
  require_nonneg(ripple_phase_gain, "ripple phase gain");
  if (polarization_ripple_amp >= 1.0) throw DomainError("polarization ripple amplitude must be < 1");
  if (!(ripple_period > 0.0)) throw DomainError("ripple period must be positive");
}

// ---- sampler ---------------------------------------------------------------

void ShapeSampler::validate() const {
  if (segments == 0) throw DomainError("sampler needs at least one segment");
  if (!(total_length > 0.0)) throw DomainError("sampler length must be positive");
  require_nonneg(curvature_min, "curvature min");
  if (!(curvature_max >= curvature_min)) throw DomainError("curvature range is inverted");
  require_nonneg(base_offset_sigma, "base offset sigma");
}

ShapeParams ShapeSampler::sample(Rng& rng) const {
  ShapeParams p;
  p.total_length = total_length;
  p.max_curvature = curvature_max;
  const double len = total_length / static_cast<double>(segments);
  for (std::size_t i = 0; i < segments; ++i) {
    Segment s;
    s.arc_length = len;
    s.curvature = rng.uniform(curvature_min, curvature_max);
    s.bend_direction = wrap_angle(rng.uniform(0.0, kTwoPi));
    p.segments.push_back(s);
  }
  // Keep the summed length exact.
  double rest = total_length;
  for (std::size_t i = 0; i + 1 < segments; ++i) rest -= p.segments[i].arc_length;
  p.segments.back().arc_length = rest;
  for (int d = 0; d < 3; ++d) p.base[d] = base_offset_sigma * rng.normal();
  return p;
}

// ---- forward model ---------------------------------------------------------

double peak_amplitude(double base, double gain, double curvature, double bend_direction,
                      double edge_angle, double clip_floor) {
  const double a = base * (1.0 + gain * curvature * std::cos(bend_direction - edge_angle));
  return std::max(a, clip_floor * base);
}

std::array<double, kGratings> grating_amplitudes(const ShapeParams& shape,
                                                 const SensorLayout& layout) {
  std::array<double, kGratings> amps{};
  for (std::size_t p = 0; p < kPlanes; ++p) {
    const Segment local = segment_at(shape, layout.plane_positions[p]);
    for (std::size_t e = 0; e < kEdgesPerPlane; ++e) {
      const std::size_t g = p * kEdgesPerPlane + e;
      amps[g] = peak_amplitude(layout.base_amplitudes[g], layout.coupling_gain, local.curvature,
                               local.bend_direction, layout.edge_angles[e], layout.clip_floor);
    }
  }
  return amps;
}

double mean_plane_curvature(const ShapeParams& shape, const SensorLayout& layout) {
  double s = 0.0;
  for (double pos : layout.plane_positions) s += segment_at(shape, pos).curvature;
  return s / static_cast<double>(kPlanes);
}

std::vector<double> render_spectrum(const std::array<double, kGratings>& amplitudes,
                                    double mean_curvature, const SensorLayout& layout,
                                    const NoiseModel& noise) {
  std::vector<double> out(layout.grid_points);
  const double inv2s2 = 1.0 / (2.0 * layout.peak_width * layout.peak_width);
  const double phase = noise.ripple_phase_gain * mean_curvature;
  for (std::size_t i = 0; i < layout.grid_points; ++i) {
    const double lambda = layout.wavelength(i);
    double peaks = 0.0;
    for (std::size_t g = 0; g < kGratings; ++g) {
      const double d = lambda - layout.bragg_centers[g];
      peaks += amplitudes[g] * std::exp(-d * d * inv2s2);
    }
    const double offset = lambda - layout.grid_start;
    const double envelope = std::exp(-noise.attenuation_coeff * mean_curvature * offset);
    const double ripple =
        1.0 + noise.polarization_ripple_amp * std::sin(kTwoPi * offset / noise.ripple_period + phase);
    out[i] = peaks * envelope * ripple;
  }
  return out;
}

ShapeParams jitter_shape(const ShapeParams& shape, double sigma, Rng& rng) {
  ShapeParams j = shape;
  for (auto& seg : j.segments) {
    const double dk = rng.normal();
    const double dt = rng.normal();
    seg.curvature = std::clamp(seg.curvature * (1.0 + sigma * dk), 0.0, shape.max_curvature);
    seg.bend_direction = wrap_angle(seg.bend_direction + sigma * std::numbers::pi * dt);
  }
  return j;
}

SpectrumSample simulate_spectrum(const ShapeParams& shape, const SensorLayout& layout,
                                 const NoiseModel& noise, std::uint64_t seed) {
  shape.validate();
  layout.validate();
  noise.validate();
  Rng rng(seed);
  SpectrumSample sample;
  sample.shape_ref = integrate_shape(shape);
  sample.intensities.reserve(kSpectra * layout.grid_points);
  for (std::size_t r = 0; r < kSpectra; ++r) {
    const ShapeParams moved = jitter_shape(shape, noise.temporal_jitter_sigma, rng);
    const auto clean = render_spectrum(grating_amplitudes(moved, layout),
                                       mean_plane_curvature(moved, layout), layout, noise);
    for (double v : clean) {
      const double noisy = v + noise.additive_sigma * rng.normal();
      sample.intensities.push_back(std::max(0.0, noisy));
    }
  }
  return sample;
}

Dataset generate_dataset(std::size_t n, std::uint64_t seed, const GeneratorConfig& config) {
  if (n == 0) throw DomainError("dataset size must be at least 1");
  config.sampler.validate();
  config.layout.validate();
  config.noise.validate();
  Dataset ds;
  ds.spectra.reserve(n * kInputSize);
  ds.targets.reserve(n * kTargetSize);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    const ShapeParams shape = config.sampler.sample(rng);
    const auto sample = simulate_spectrum(shape, config.layout, config.noise, rng.next_u64());
    ds.append(sample.intensities, sample.shape_ref);
  }
  return ds;
}

// ---- json ------------------------------------------------------------------

void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = nlohmann::json{
      {"sampler",
       {{"segments", c.sampler.segments},
        {"total_length", c.sampler.total_length},
        {"curvature_min", c.sampler.curvature_min},
        {"curvature_max", c.sampler.curvature_max},
        {"base_offset_sigma", c.sampler.base_offset_sigma}}},
      {"layout",
       {{"plane_positions", c.layout.plane_positions},
        {"bragg_centers", c.layout.bragg_centers},
        {"edge_angles", c.layout.edge_angles},
        {"base_amplitudes", c.layout.base_amplitudes},
        {"peak_width", c.layout.peak_width},
        {"coupling_gain", c.layout.coupling_gain},
        {"clip_floor", c.layout.clip_floor}}},
      {"noise",
       {{"additive_sigma", c.noise.additive_sigma},
        {"temporal_jitter_sigma", c.noise.temporal_jitter_sigma},
        {"polarization_ripple_amp", c.noise.polarization_ripple_amp},
        {"attenuation_coeff", c.noise.attenuation_coeff},
        {"ripple_period", c.noise.ripple_period},
        {"ripple_phase_gain", c.noise.ripple_phase_gain}}},
  };
}

void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  reject_unknown_keys(j, {"sampler", "layout", "noise"}, "generator");
  c = GeneratorConfig{};
  if (auto it = j.find("sampler"); it != j.end()) {
    const auto& s = *it;
    reject_unknown_keys(s, {"segments", "total_length", "curvature_min", "curvature_max",
                            "base_offset_sigma"},
                        "generator.sampler");
    read_opt(s, "segments", c.sampler.segments, "generator.sampler");
    read_opt(s, "total_length", c.sampler.total_length, "generator.sampler");
    read_opt(s, "curvature_min", c.sampler.curvature_min, "generator.sampler");
    read_opt(s, "curvature_max", c.sampler.curvature_max, "generator.sampler");
    read_opt(s, "base_offset_sigma", c.sampler.base_offset_sigma, "generator.sampler");
  }
  if (auto it = j.find("layout"); it != j.end()) {
    const auto& l = *it;
    reject_unknown_keys(l, {"plane_positions", "bragg_centers", "edge_angles", "base_amplitudes",
                            "peak_width", "coupling_gain", "clip_floor"},
                        "generator.layout");
    read_opt(l, "plane_positions", c.layout.plane_positions, "generator.layout");
    read_opt(l, "bragg_centers", c.layout.bragg_centers, "generator.layout");
    read_opt(l, "edge_angles", c.layout.edge_angles, "generator.layout");
    read_opt(l, "base_amplitudes", c.layout.base_amplitudes, "generator.layout");
    read_opt(l, "peak_width", c.layout.peak_width, "generator.layout");
    read_opt(l, "coupling_gain", c.layout.coupling_gain, "generator.layout");
    read_opt(l, "clip_floor", c.layout.clip_floor, "generator.layout");
  }
  if (auto it = j.find("noise"); it != j.end()) {
    const auto& n = *it;
    reject_unknown_keys(n, {"additive_sigma", "temporal_jitter_sigma", "polarization_ripple_amp",
                            "attenuation_coeff", "ripple_period", "ripple_phase_gain"},
                        "generator.noise");
    read_opt(n, "additive_sigma", c.noise.additive_sigma, "generator.noise");
    read_opt(n, "temporal_jitter_sigma", c.noise.temporal_jitter_sigma, "generator.noise");
    read_opt(n, "polarization_ripple_amp", c.noise.polarization_ripple_amp, "generator.noise");
    read_opt(n, "attenuation_coeff", c.noise.attenuation_coeff, "generator.noise");
    read_opt(n, "ripple_period", c.noise.ripple_period, "generator.noise");
    read_opt(n, "ripple_phase_gain", c.noise.ripple_phase_gain, "generator.noise");
  }
}

}  // namespace efbg
