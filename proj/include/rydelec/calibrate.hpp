#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "rydelec/atomscheme.hpp"
#include "rydelec/doppler.hpp"
#include "rydelec/observables.hpp"

namespace rydelec {

// ---------------------------------------------------------------------------------------------
// Peak finding

struct PeakOptions {
  /// Minimum topographic prominence as a fraction of the trace's value range.
  double min_prominence = 0.05;
  /// Half-width (samples) of the moving-average smoother; 0 picks ~n/200.
  std::size_t smooth_halfwidth = 0;
  /// Also require this many standard deviations of the smoothed noise, estimated from the
  /// median deviation of the raw samples about the smoothed curve. 0 disables the floor.
  double noise_sigmas = 10.0;
};

struct Peak {
  std::size_t index = 0;    // sample index of the smoothed maximum
  double center = 0.0;      // refined position on the axis
  double height = 0.0;      // smoothed value at the maximum
  double prominence = 0.0;
};

/// Maxima of a sampled curve: zero crossings of the smoothed derivative, filtered by
/// prominence, centers refined by a least-squares parabola over the peak's upper half.
/// Sorted by axis position.
std::vector<Peak> find_peaks(std::span<const double> axis, std::span<const double> values,
                             const PeakOptions& options = {});

// ---------------------------------------------------------------------------------------------
// Frequency axis and Autler-Townes splitting

/// Hz per axis unit from a carrier and two modulation sidebands at +-sideband_frequency.
/// Throws AnalysisError unless exactly three peaks are found.
double calibrate_scan_axis(const SpectrumTrace& trace, double sideband_frequency, const PeakOptions& options = {});

struct SplittingResult {
  double splitting = 0.0;  // Hz
  bool split = false;      // false when fewer than two peaks were found
  std::vector<Peak> peaks;
};

/// Separation of the two most prominent peaks, in Hz. Axes in rad/s are converted; Hz axes
/// are taken as is; any other axis unit is scaled by `hz_per_axis_unit`.
SplittingResult extract_at_splitting(const SpectrumTrace& trace, const PeakOptions& options = {},
                                     double hz_per_axis_unit = 1.0);

// ---------------------------------------------------------------------------------------------
// Field calibration

struct CalibrationPoint {
  double power_dbm = 0.0;
  double splitting_hz = 0.0;
  bool operator==(const CalibrationPoint&) const = default;
};

struct CalibrationFit {
  double c_cal = 0.0;         // (V/m) per sqrt(mW)
  double slope = 0.0;         // Hz per sqrt(mW)
  double residual_rms = 0.0;  // Hz
  std::vector<CalibrationPoint> points;

  /// Field at the atoms for a source power.
  double field_at(double power_dbm) const;
  /// Source power producing `field`.
  double power_for(double field) const;
};

/// Least-squares line through the origin of splitting vs sqrt(P/mW); field = 2 pi hbar
/// splitting / d gives c_cal = 2 pi hbar slope / d. Points are sorted before summation so the
/// result does not depend on their order. Throws AnalysisError for a non-positive slope.
CalibrationFit fit_field_calibration(std::span<const CalibrationPoint> points, double dipole_moment);

/// Calibration pinned by one (power, field) pair, e.g. -60 dBm <-> 70 uV/m.
CalibrationFit calibration_from_anchor(double power_dbm, double field);

/// S = sqrt(10^((P_sig - SNR)/10) f_RBW) C_cal  [V m^-1 Hz^-1/2].
double sensitivity_from_snr(double p_sig_dbm, double snr_db, double rbw, const CalibrationFit& fit);

// ---------------------------------------------------------------------------------------------
// Heterodyne readout

struct HeterodyneSetup {
  double lo_field = 0.0;        // V/m
  double sig_field = 0.0;       // V/m
  double beat_frequency = 0.0;  // Hz
  double rbw = 1.0;             // Hz
  double noise_floor = 0.0;     // signal units^2 / Hz
};

/// Flat noise spectral density per channel: photodetector-limited transmission and
/// dark/background-limited photon counting.
double default_noise_floor(Channel channel);

struct HeterodyneResult {
  double beat_amplitude = 0.0;  // channel signal units
  double slope = 0.0;           // d signal / d field at the LO field
  double snr_db = 0.0;
  bool zero_slope = false;
  std::vector<std::string> warnings;
};

struct HeterodyneOptions {
  SignalOptions signal;
  /// Relative finite-difference step on the LO field.
  double relative_step = 1e-2;
};

/// Small-signal beat: |dS/dE|(E_LO) * E_sig by centered difference of the steady-state signal;
/// SNR = 10 log10(amplitude^2 / (noise_floor * rbw)).
HeterodyneResult simulate_heterodyne(const LadderScheme& scheme, const HeterodyneSetup& setup,
                                     const VelocityGrid& grid, const HeterodyneOptions& options);

/// Beat amplitude from a full two-tone time-domain solve (LO + signal at beat_frequency),
/// taken as the Fourier amplitude at the beat over whole beat periods once the response is
/// periodic. Validation route for the small-signal model.
double two_tone_beat_amplitude(const LadderScheme& scheme, const HeterodyneSetup& setup, const VelocityGrid& grid,
                               const HeterodyneOptions& options, std::size_t samples_per_period = 64,
                               std::size_t settle_periods = 4);

struct SensitivityMap {
  std::vector<double> probe_powers;  // W
  std::vector<double> lo_fields;     // V/m
  /// Row-major, lo field fastest: sensitivity[ip * lo_fields.size() + il], V m^-1 Hz^-1/2.
  /// Cells that failed are NaN and listed in `failures`.
  std::vector<double> sensitivity;
  std::vector<double> snr_db;
  std::vector<std::string> failures;

  double at(std::size_t ip, std::size_t il) const { return sensitivity[ip * lo_fields.size() + il]; }
  /// Smallest finite entry and its (probe, lo) indices.
  std::tuple<double, std::size_t, std::size_t> minimum() const;
};

struct SensitivityMapOptions {
  HeterodyneOptions heterodyne;
  double sig_field = 70e-6;
  double rbw = 1.0;
  double beat_frequency = 1e3;
  double noise_floor = 0.0;  // 0 = default_noise_floor(channel)
  CalibrationFit calibration = calibration_from_anchor(-60.0, 70e-6);
};

/// simulate_heterodyne + sensitivity_from_snr per (probe power, LO field) cell.
SensitivityMap sensitivity_map(const LadderScheme& scheme, std::span<const double> probe_powers,
                               std::span<const double> lo_fields, const VelocityGrid& grid,
                               const SensitivityMapOptions& options);

}  // namespace rydelec
