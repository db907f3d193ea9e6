#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "rydelec/atomscheme.hpp"
#include "rydelec/doppler.hpp"
#include "rydelec/observables.hpp"

namespace rydelec {

struct TimeTrace {
  std::vector<double> times;  // s
  std::vector<double> values;
  std::string units;

  /// Throws ValidationError unless lengths match and times strictly increase.
  void validate() const;
};

/// A switching instant of the RF drive; `on` marks the RF turning on (a rise edge).
struct Edge {
  double time = 0.0;
  bool on = true;
};

/// Alternating edges starting at `first` and spaced by half a period.
std::vector<Edge> square_wave_edges(double first, double period, std::size_t count, bool first_on);

struct SquareWaveOptions {
  SignalOptions signal;
  std::size_t record_cycles = 2;
  std::size_t max_cycles = 100000;
  double tolerance = 1e-6;  // max |rho_k - rho_{k-1}| between consecutive cycle ends
};

struct SquareWaveResult {
  TimeTrace trace;
  std::vector<Edge> edges;  // rise at T/2, fall at T, ...
  std::size_t cycles = 0;   // cycles run before the response was periodic
};

/// RF square wave at 50% duty. Each velocity class starts in its RF-off steady state and is
/// propagated cycle by cycle with exp(L_on T/2), exp(L_off T/2) until two consecutive cycle ends
/// agree within `tolerance`. The periodic response is then sampled at `samples` points per
/// period over `record_cycles` cycles plus a trailing off half: RF off on [0, T/2), on on
/// [T/2, T), and so on. The channel signal is taken from the velocity-averaged state. Throws SolverError if the response is not periodic after
/// `max_cycles`.
SquareWaveResult simulate_square_wave(const LadderScheme& scheme, double rf_on_field, double period,
                                      std::size_t samples, const VelocityGrid& grid,
                                      const SquareWaveOptions& options);

struct EdgeTiming {
  Edge edge;
  double tau = 0.0;      // 10 % to 90 % crossing interval, s
  double amplitude = 0.0;
};

struct RiseFall {
  double tau_rise = 0.0;
  double tau_rise_std = 0.0;
  double tau_fall = 0.0;
  double tau_fall_std = 0.0;
  std::vector<EdgeTiming> edges;
};

/// 90/10 times per edge. The edge amplitude is local: the level before an edge is the mean of
/// the last 10% of samples of the preceding segment, the level after it the mean of the last
/// 10% of the following segment. Crossings are linearly interpolated. Rise and fall times are
/// the mean over edges with the sample standard deviation. Throws AnalysisError naming the edge
/// when a crossing is missing or the edge has no amplitude.
RiseFall extract_rise_fall(const TimeTrace& trace, std::span<const Edge> edges);

/// 0.35 / tau.
double bandwidth_from_tau(double tau);

struct DecayBudget {
  double tau_meas = 0.0;  // s
  double t_bbr = 0.0;     // s
  double t_rydryd = 0.0;  // s
  double gamma_col = 0.0; // 1/s
  bool negative = false;  // the inputs are inconsistent with a positive collision rate
};

/// gamma_col = 1/tau_meas - 1/T_bbr - 1/T_rydryd. A negative result is flagged, not thrown.
DecayBudget decay_decomposition(double tau_meas, double t_bbr, double t_rydryd);

}  // namespace rydelec
