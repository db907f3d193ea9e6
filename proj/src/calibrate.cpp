#include "rydelec/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <optional>

#include "rydelec/error.hpp"
#include "rydelec/lindblad.hpp"
#include "rydelec/parallel.hpp"
#include "rydelec/units.hpp"

namespace rydelec {

namespace {

std::vector<double> smooth(std::span<const double> v, std::size_t half) {
  const std::size_t n = v.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n - 1, i + half);
    CompensatedSum sum;
    for (std::size_t j = lo; j <= hi; ++j) sum.add(v[j]);
    out[i] = sum.value() / static_cast<double>(hi - lo + 1);
  }
  return out;
}

// Vertex of the least-squares parabola through (x, y); nullopt when it is not a maximum
// inside [xmin, xmax].
std::optional<double> parabola_vertex(std::span<const double> x, std::span<const double> y, double x0,
                                      double scale) {
  // Normal equations in the centred, scaled variable u = (x - x0) / scale.
  double s[5] = {0, 0, 0, 0, 0};
  double t[3] = {0, 0, 0};
  double umin = std::numeric_limits<double>::infinity(), umax = -umin;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double u = (x[i] - x0) / scale;
    umin = std::min(umin, u);
    umax = std::max(umax, u);
    double p = 1.0;
    for (int k = 0; k < 5; ++k) {
      s[k] += p;
      if (k < 3) t[k] += p * y[i];
      p *= u;
    }
  }
  Eigen::Matrix3d a;
  a << s[0], s[1], s[2], s[1], s[2], s[3], s[2], s[3], s[4];
  const Eigen::Vector3d rhs(t[0], t[1], t[2]);
  const Eigen::Vector3d c = a.colPivHouseholderQr().solve(rhs);
  if (!(c(2) < 0.0)) return std::nullopt;
  const double u = -c(1) / (2.0 * c(2));
  if (!(u >= umin && u <= umax)) return std::nullopt;
  return x0 + u * scale;
}

}  // namespace

std::vector<Peak> find_peaks(std::span<const double> axis, std::span<const double> values, const PeakOptions& options) {
  if (axis.size() != values.size()) throw ValidationError("peak finding needs equal-length axis and values");
  const std::size_t n = values.size();
  if (n < 3) return {};
  const std::size_t half = options.smooth_halfwidth > 0 ? options.smooth_halfwidth : std::max<std::size_t>(1, n / 200);
  const auto s = smooth(values, half);
  const auto [mn, mx] = std::minmax_element(s.begin(), s.end());
  const double range = *mx - *mn;
  if (!(range > 0.0)) return {};
  double threshold = options.min_prominence * range;
  if (options.noise_sigmas > 0.0) {
    // Robust noise level of the raw samples about the smoothed curve, reduced by the window.
    std::vector<double> resid(n);
    for (std::size_t i = 0; i < n; ++i) resid[i] = std::abs(values[i] - s[i]);
    std::nth_element(resid.begin(), resid.begin() + n / 2, resid.end());
    const double sigma = 1.4826 * resid[n / 2] / std::sqrt(static_cast<double>(2 * half + 1));
    threshold = std::max(threshold, options.noise_sigmas * sigma);
  }

  std::vector<Peak> peaks;
  std::size_t i = 1;
  while (i + 1 < n) {
    if (s[i] > s[i - 1]) {
      // Walk across a plateau, if any.
      std::size_t j = i;
      while (j + 1 < n && s[j + 1] == s[i]) ++j;
      if (j + 1 < n && s[j + 1] < s[i]) {
        const std::size_t top = (i + j) / 2;
        const double h = s[top];
        double left_min = h, right_min = h;
        std::size_t k = top;
        while (k > 0 && s[k - 1] <= h) left_min = std::min(left_min, s[--k]);
        if (k == 0) left_min = std::min(left_min, s[0]);
        k = top;
        while (k + 1 < n && s[k + 1] <= h) right_min = std::min(right_min, s[++k]);
        const double prominence = h - std::max(left_min, right_min);
        if (prominence >= threshold) peaks.push_back({top, axis[top], h, prominence});
      }
      i = j + 1;
    } else {
      ++i;
    }
  }

  // Refine each center on the raw samples covering the peak's upper half.
  for (auto& p : peaks) {
    const double floor = p.height - 0.5 * p.prominence;
    std::size_t lo = p.index, hi = p.index;
    // Stay on this peak's own flanks: stop at the half-prominence level or at a valley.
    while (lo > 0 && s[lo - 1] >= floor && s[lo - 1] <= s[lo]) --lo;
    while (hi + 1 < n && s[hi + 1] >= floor && s[hi + 1] <= s[hi]) ++hi;
    if (hi - lo < 2) {
      lo = p.index > 0 ? p.index - 1 : 0;
      hi = std::min(n - 1, p.index + 1);
    }
    if (hi - lo < 2) continue;
    const double scale = std::abs(axis[hi] - axis[lo]);
    if (const auto v = parabola_vertex(axis.subspan(lo, hi - lo + 1), values.subspan(lo, hi - lo + 1), axis[p.index],
                                       scale > 0.0 ? scale : 1.0)) {
      p.center = *v;
    }
  }
  std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.center < b.center; });
  return peaks;
}

double calibrate_scan_axis(const SpectrumTrace& trace, double sideband_frequency, const PeakOptions& options) {
  trace.validate();
  const auto peaks = find_peaks(trace.axis, trace.values, options);
  if (peaks.size() != 3) {
    throw AnalysisError("scan-axis calibration needs a carrier and two sidebands, found " +
                        std::to_string(peaks.size()) + " peaks");
  }
  const double left = std::abs(peaks[1].center - peaks[0].center);
  const double right = std::abs(peaks[2].center - peaks[1].center);
  const double mean = 0.5 * (left + right);
  if (!(mean > 0.0)) throw AnalysisError("sideband separation is zero");
  return sideband_frequency / mean;
}

SplittingResult extract_at_splitting(const SpectrumTrace& trace, const PeakOptions& options, double hz_per_axis_unit) {
  trace.validate();
  double factor = hz_per_axis_unit;
  if (trace.axis_units == "rad/s") factor = 1.0 / units::two_pi;
  if (trace.axis_units == "Hz") factor = 1.0;

  SplittingResult result;
  result.peaks = find_peaks(trace.axis, trace.values, options);
  if (result.peaks.size() < 2) return result;
  auto ranked = result.peaks;
  std::stable_sort(ranked.begin(), ranked.end(), [](const Peak& a, const Peak& b) { return a.prominence > b.prominence; });
  result.split = true;
  result.splitting = std::abs(ranked[0].center - ranked[1].center) * factor;
  return result;
}

double CalibrationFit::field_at(double power_dbm) const { return c_cal * std::sqrt(units::dbm_to_mw(power_dbm)); }

double CalibrationFit::power_for(double field) const {
  const double root_mw = field / c_cal;
  return units::mw_to_dbm(root_mw * root_mw);
}

CalibrationFit fit_field_calibration(std::span<const CalibrationPoint> points, double dipole_moment) {
  if (points.size() < 2) throw AnalysisError("field calibration needs at least two points");
  if (!(dipole_moment > 0.0)) throw AnalysisError("field calibration needs a positive dipole moment");
  std::vector<CalibrationPoint> sorted(points.begin(), points.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return a.power_dbm != b.power_dbm ? a.power_dbm < b.power_dbm : a.splitting_hz < b.splitting_hz;
  });

  CompensatedSum sxy, sxx;
  for (const auto& p : sorted) {
    const double x = std::sqrt(units::dbm_to_mw(p.power_dbm));
    sxy.add(x * p.splitting_hz);
    sxx.add(x * x);
  }
  CalibrationFit fit;
  fit.slope = sxy.value() / sxx.value();
  if (!(fit.slope > 0.0)) throw AnalysisError("field calibration slope is not positive");
  CompensatedSum ss;
  for (const auto& p : sorted) {
    const double r = p.splitting_hz - fit.slope * std::sqrt(units::dbm_to_mw(p.power_dbm));
    ss.add(r * r);
  }
  fit.residual_rms = std::sqrt(ss.value() / static_cast<double>(sorted.size()));
  fit.c_cal = units::two_pi * units::hbar * fit.slope / dipole_moment;
  fit.points = std::move(sorted);
  return fit;
}

CalibrationFit calibration_from_anchor(double power_dbm, double field) {
  CalibrationFit fit;
  fit.c_cal = field / std::sqrt(units::dbm_to_mw(power_dbm));
  fit.points = {{power_dbm, 0.0}};
  return fit;
}

double sensitivity_from_snr(double p_sig_dbm, double snr_db, double rbw, const CalibrationFit& fit) {
  if (!(rbw > 0.0)) throw AnalysisError("resolution bandwidth must be > 0");
  return std::sqrt(std::pow(10.0, (p_sig_dbm - snr_db) / 10.0) * rbw) * fit.c_cal;
}

double default_noise_floor(Channel channel) {
  // Transmission: fractional-intensity noise ~ -120 dB/Hz, about 20 dB above probe shot noise.
  // Fluorescence: shot noise of ~1e3 dark + background counts/s, 2 R counts^2 s^-2 / Hz.
  return channel == Channel::transmission ? 1e-12 : 2e3;
}

HeterodyneResult simulate_heterodyne(const LadderScheme& scheme, const HeterodyneSetup& setup,
                                     const VelocityGrid& grid, const HeterodyneOptions& options) {
  if (!(setup.lo_field > 0.0)) throw ValidationError("LO field must be > 0");
  if (!(setup.sig_field >= 0.0)) throw ValidationError("signal field must be >= 0");
  if (!(setup.rbw > 0.0)) throw ValidationError("resolution bandwidth must be > 0");
  const auto rf = scheme.rf_drive_index();
  if (!rf) throw ValidationError("heterodyne readout needs an RF drive");
  const double noise = setup.noise_floor > 0.0 ? setup.noise_floor : default_noise_floor(options.signal.channel);

  HeterodyneResult result;
  if (setup.sig_field > setup.lo_field) result.warnings.push_back("signal field exceeds the LO field");

  const double h = options.relative_step * setup.lo_field;
  std::vector<LadderScheme> schemes(2, scheme);
  schemes[0].drives[*rf].set_field(setup.lo_field + h);
  schemes[1].drives[*rf].set_field(setup.lo_field - h);
  const auto s = evaluate_signals(schemes, grid, options.signal);
  result.slope = (s[0] - s[1]) / (2.0 * h);
  const double scale = std::max(std::abs(s[0]), std::abs(s[1]));
  if (result.slope == 0.0 || std::abs(s[0] - s[1]) <= 1e-13 * scale) {
    result.zero_slope = true;
    result.warnings.push_back("zero slope at this LO field: no first-order beat");
  }
  result.beat_amplitude = std::abs(result.slope) * setup.sig_field;
  const double power = result.beat_amplitude * result.beat_amplitude;
  result.snr_db = power > 0.0 ? 10.0 * std::log10(power / (noise * setup.rbw))
                              : -std::numeric_limits<double>::infinity();
  return result;
}

double two_tone_beat_amplitude(const LadderScheme& scheme, const HeterodyneSetup& setup, const VelocityGrid& grid,
                               const HeterodyneOptions& options, std::size_t samples_per_period,
                               std::size_t settle_periods) {
  if (!(setup.beat_frequency > 0.0)) throw ValidationError("two-tone solve needs a beat frequency > 0");
  if (samples_per_period < 8) throw ValidationError("two-tone solve needs at least 8 samples per beat period");
  const auto rf = scheme.rf_drive_index();
  if (!rf) throw ValidationError("heterodyne readout needs an RF drive");
  const Drive& drive = scheme.drives[*rf];
  const double period = 1.0 / setup.beat_frequency;
  const double dt = period / static_cast<double>(samples_per_period);
  const std::size_t steps = (settle_periods + 1) * samples_per_period;
  const double omega_beat = units::two_pi * setup.beat_frequency;
  const auto l = static_cast<Eigen::Index>(drive.lower), u = static_cast<Eigen::Index>(drive.upper);
  const std::size_t nodes = grid.nodes.size();

  // Per-node state trajectories for the last period, evolved with a piecewise-constant
  // complex RF envelope d (E_LO + E_sig exp(-i w t)) / hbar.
  std::vector<std::vector<DensityMatrix>> samples(nodes);
  LadderScheme lo_only = scheme;
  lo_only.drives[*rf].set_field(setup.lo_field);

  parallel_for(nodes, options.signal.threads, [&](std::size_t k) {
    const double v = grid.nodes[k].velocity;
    const ComplexMatrix h0 = build_hamiltonian(lo_only, v);
    DensityMatrix rho =
        steady_state(build_liouvillian(h0, lo_only, options.signal.transfers));
    const auto n = static_cast<Eigen::Index>(rho.dim());
    ComplexVector state = Eigen::Map<const ComplexVector>(rho.matrix().data(), n * n);
    auto& out = samples[k];
    out.reserve(samples_per_period);
    for (std::size_t step = 0; step < steps; ++step) {
      const double t_mid = (static_cast<double>(step) + 0.5) * dt;
      const std::complex<double> envelope =
          setup.lo_field + setup.sig_field * std::exp(std::complex<double>(0.0, -omega_beat * t_mid));
      const std::complex<double> omega = drive.dipole_moment * envelope / units::hbar;
      ComplexMatrix h = h0;
      h(l, u) = 0.5 * omega;
      h(u, l) = 0.5 * std::conj(omega);
      const auto L = build_liouvillian(h, lo_only, options.signal.transfers);
      state = propagator(L, dt) * state;
      if (!state.allFinite()) throw SolverError("two-tone propagation failed at step " + std::to_string(step));
      if (step >= settle_periods * samples_per_period) {
        out.emplace_back(ComplexMatrix(Eigen::Map<ComplexMatrix>(state.data(), n, n)));
      }
    }
  });

  std::complex<double> acc = 0.0;
  for (std::size_t j = 0; j < samples_per_period; ++j) {
    std::vector<DensityMatrix> per_node(nodes);
    for (std::size_t k = 0; k < nodes; ++k) per_node[k] = samples[k][j];
    const double signal = channel_signal(average_states(per_node, grid), scheme, options.signal.channel,
                                         options.signal.fluorescence);
    const double t = static_cast<double>(settle_periods * samples_per_period + j + 1) * dt;
    acc += signal * std::exp(std::complex<double>(0.0, -omega_beat * t));
  }
  return 2.0 * std::abs(acc) / static_cast<double>(samples_per_period);
}

std::tuple<double, std::size_t, std::size_t> SensitivityMap::minimum() const {
  double best = std::numeric_limits<double>::infinity();
  std::size_t bp = 0, bl = 0;
  for (std::size_t ip = 0; ip < probe_powers.size(); ++ip) {
    for (std::size_t il = 0; il < lo_fields.size(); ++il) {
      const double v = at(ip, il);
      if (std::isfinite(v) && v < best) {
        best = v;
        bp = ip;
        bl = il;
      }
    }
  }
  return {best, bp, bl};
}

SensitivityMap sensitivity_map(const LadderScheme& scheme, std::span<const double> probe_powers,
                               std::span<const double> lo_fields, const VelocityGrid& grid,
                               const SensitivityMapOptions& options) {
  if (probe_powers.empty() || lo_fields.empty()) throw ValidationError("sensitivity map grids must be non-empty");
  const auto probe = SweepParameter::parse(scheme, "probe-power");
  const double p_sig_dbm = options.calibration.power_for(options.sig_field);

  SensitivityMap map;
  map.probe_powers.assign(probe_powers.begin(), probe_powers.end());
  map.lo_fields.assign(lo_fields.begin(), lo_fields.end());
  map.sensitivity.assign(probe_powers.size() * lo_fields.size(), std::numeric_limits<double>::quiet_NaN());
  map.snr_db.assign(map.sensitivity.size(), std::numeric_limits<double>::quiet_NaN());

  for (std::size_t ip = 0; ip < probe_powers.size(); ++ip) {
    LadderScheme s = scheme;
    probe.apply(s, probe_powers[ip]);
    for (std::size_t il = 0; il < lo_fields.size(); ++il) {
      const std::size_t cell = ip * lo_fields.size() + il;
      try {
        HeterodyneSetup setup{lo_fields[il], options.sig_field, options.beat_frequency, options.rbw, options.noise_floor};
        const auto r = simulate_heterodyne(s, setup, grid, options.heterodyne);
        map.snr_db[cell] = r.snr_db;
        if (r.zero_slope) {
          map.failures.push_back("cell (" + std::to_string(ip) + ", " + std::to_string(il) + "): zero slope");
          continue;
        }
        map.sensitivity[cell] = sensitivity_from_snr(p_sig_dbm, r.snr_db, options.rbw, options.calibration);
      } catch (const Error& e) {
        map.failures.push_back("cell (" + std::to_string(ip) + ", " + std::to_string(il) + "): " + e.what());
      }
    }
  }
  return map;
}

}  // namespace rydelec
