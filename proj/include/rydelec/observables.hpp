#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rydelec/atomscheme.hpp"
#include "rydelec/doppler.hpp"
#include "rydelec/lindblad.hpp"

namespace rydelec {

/// Observable sampled along a swept axis. `axis_units` is "rad/s" for detuning and Rabi axes,
/// "V/m" for fields, "W" for powers, "Hz" or "s" for ingested data.
struct SpectrumTrace {
  std::string axis_name;
  std::string axis_units;
  std::vector<double> axis;
  std::vector<double> values;
  std::string units;

  /// Throws ValidationError unless lengths match and the axis is strictly monotone.
  void validate() const;
};

/// Counts photons from decay branches of `source_levels` whose wavelength lies inside the
/// band-pass filter. An empty source list means every level.
struct FluorescenceConfig {
  double collection_efficiency = 1e-3;
  std::vector<std::size_t> source_levels;
  double band_center = 510e-9;  // m
  double band_fwhm = 10e-9;     // m
  double detector_gain = 1.0;   // counts per detected photon
};

enum class Channel { transmission, fluorescence };

Channel parse_channel(std::string_view name);
const char* to_string(Channel channel);

/// Intensity absorption coefficient (1/m) of the probe from the probe coherence.
double absorption_coefficient(const DensityMatrix& rho, const LadderScheme& scheme);

/// Beer-Lambert probe transmission exp(-alpha L) through the cell.
double probe_transmission(const DensityMatrix& rho, const LadderScheme& scheme);

/// Atoms inside the interrogated cylinder (density x pi r^2 x cell length).
double interrogated_atoms(const LadderScheme& scheme);

/// Detected photons per second through the filter.
double fluorescence_rate(const DensityMatrix& rho, const LadderScheme& scheme, const FluorescenceConfig& cfg);

/// Transmission (dimensionless) or fluorescence counts per second (rate x detector gain).
double channel_signal(const DensityMatrix& rho, const LadderScheme& scheme, Channel channel,
                      const FluorescenceConfig& cfg);

/// Units string for channel_signal.
const char* channel_units(Channel channel);

/// Weighted element-wise average of per-velocity states, compensated and in node order.
DensityMatrix average_states(std::span<const DensityMatrix> states, const VelocityGrid& grid);

/// Velocity-averaged steady state. Nodes are solved in parallel; the reduction order is fixed.
DensityMatrix averaged_steady_state(const LadderScheme& scheme, const VelocityGrid& grid,
                                    std::span<const IncoherentTransfer> transfers = {}, unsigned threads = 1);

struct SignalOptions {
  Channel channel = Channel::transmission;
  FluorescenceConfig fluorescence;
  std::vector<IncoherentTransfer> transfers;
  unsigned threads = 1;  // 0 = hardware concurrency
};

/// Steady-state channel signal for every scheme. Result i depends only on schemes[i].
std::vector<double> evaluate_signals(std::span<const LadderScheme> schemes, const VelocityGrid& grid,
                                     const SignalOptions& options);

double evaluate_signal(const LadderScheme& scheme, const VelocityGrid& grid, const SignalOptions& options);

/// A named scheme knob: "<drive>-detuning" and "<drive>-rabi" (rad/s), "<drive>-field" (V/m),
/// "<drive>-power" (W). "rf-field" and "probe-power" are the usual ones.
struct SweepParameter {
  enum class Kind { detuning, rabi, field, power };
  std::string name;
  Kind kind = Kind::detuning;
  std::size_t drive = 0;

  /// Throws ValidationError for unknown names or drives lacking what the knob needs.
  static SweepParameter parse(const LadderScheme& scheme, std::string_view name);
  void apply(LadderScheme& scheme, double value) const;
  const char* units() const;
};

SpectrumTrace sweep(const LadderScheme& scheme, const SweepParameter& parameter, std::span<const double> values,
                    const VelocityGrid& grid, const SignalOptions& options);

/// Two-parameter surface; values are row-major with `x` varying fastest.
struct SignalMap {
  std::string x_name, y_name, x_units, y_units, units;
  std::vector<double> x, y;
  std::vector<double> values;

  double at(std::size_t ix, std::size_t iy) const { return values[iy * x.size() + ix]; }
};

SignalMap signal_map(const LadderScheme& scheme, const SweepParameter& x_param, std::span<const double> x_values,
                     const SweepParameter& y_param, std::span<const double> y_values, const VelocityGrid& grid,
                     const SignalOptions& options);

/// Evenly spaced grid of `count` values from `first` to `last` inclusive.
std::vector<double> linspace(double first, double last, std::size_t count);

}  // namespace rydelec
