#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "rydelec/atomscheme.hpp"
#include "rydelec/calibrate.hpp"
#include "rydelec/error.hpp"
#include "rydelec/units.hpp"
#include "support.hpp"

using namespace rydelec;
using test::lorentzian;

namespace {

SpectrumTrace synthetic(double lo, double hi, std::size_t n, const std::vector<std::pair<double, double>>& peaks,
                        double fwhm, const std::string& units = "s") {
  SpectrumTrace t{"axis", units, linspace(lo, hi, n), {}, "V"};
  for (const double x : t.axis) {
    double y = 0.0;
    for (const auto& [c, h] : peaks) y += lorentzian(x, c, fwhm, h);
    t.values.push_back(y);
  }
  return t;
}

// Weak optical drives so the doublet spacing equals the RF Rabi rate.
LadderScheme weak_optics() {
  auto s = default_scheme();
  s.drives[0].set_rabi(units::angular(0.1e6));
  s.drives[1].set_rabi(units::angular(0.2e6));
  s.drives[2].set_rabi(units::angular(0.2e6));
  return s;
}

}  // namespace

TEST_SUITE("calibrate") {

TEST_CASE("scan axis from modulation sidebands") {
  const auto t = synthetic(-3e-3, 3e-3, 3001, {{-1e-3, 0.5}, {0.0, 1.0}, {1e-3, 0.5}}, 0.1e-3);
  CHECK(calibrate_scan_axis(t, 5e6) == doctest::Approx(5e9).epsilon(1e-3));

  // Uneven placement averages the two separations.
  const auto u = synthetic(-3e-3, 3e-3, 3001, {{-0.8e-3, 0.5}, {0.0, 1.0}, {1.2e-3, 0.5}}, 0.1e-3);
  CHECK(calibrate_scan_axis(u, 5e6) == doctest::Approx(5e6 / 1e-3).epsilon(1e-3));

  const auto two = synthetic(-3e-3, 3e-3, 3001, {{-1e-3, 0.5}, {0.0, 1.0}}, 0.1e-3);
  CHECK_THROWS_WITH_AS(calibrate_scan_axis(two, 5e6), doctest::Contains("found 2 peaks"), AnalysisError);
}

TEST_CASE("scan axis is robust to noise") {
  std::mt19937_64 rng(20240611);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::uniform_real_distribution<double> jitter(-0.1e-3, 0.1e-3);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const double centre = jitter(rng);
    auto t = synthetic(-3e-3, 3e-3, 3001, {{centre - 1e-3, 0.6}, {centre, 1.0}, {centre + 1e-3, 0.6}}, 0.15e-3);
    for (auto& v : t.values) v += noise(rng);
    const double scale = calibrate_scan_axis(t, 5e6);
    worst = std::max(worst, std::abs(scale / 5e9 - 1.0));
  }
  CHECK(worst < 0.01);
}

TEST_CASE("peak finding") {
  const auto t = synthetic(-10.0, 10.0, 2001, {{-4.3, 1.0}, {2.2, 0.3}, {6.0, 0.01}}, 0.5, "Hz");
  const auto peaks = find_peaks(t.axis, t.values);
  REQUIRE(peaks.size() == 2);
  CHECK(peaks[0].center == doctest::Approx(-4.3).epsilon(1e-3));
  CHECK(peaks[1].center == doctest::Approx(2.2).epsilon(1e-3));
  CHECK(peaks[0].prominence > peaks[1].prominence);
  CHECK(find_peaks(std::vector<double>{1, 2, 3}, std::vector<double>{1, 1, 1}).empty());
  CHECK_THROWS_AS(find_peaks(std::vector<double>{1, 2}, std::vector<double>{1}), ValidationError);
}

TEST_CASE("AT splitting of synthetic lines") {
  const auto single = synthetic(-20e6, 20e6, 4001, {{0.0, 1.0}}, 1e6, "Hz");
  const auto one = extract_at_splitting(single);
  CHECK_FALSE(one.split);
  CHECK(one.splitting == 0.0);
  CHECK(one.peaks.size() == 1);

  const auto pair = synthetic(-20e6, 20e6, 4001, {{-5e6, 1.0}, {5e6, 1.0}}, 0.5e6, "Hz");
  const auto two = extract_at_splitting(pair);
  REQUIRE(two.split);
  CHECK(two.splitting == doctest::Approx(10e6).epsilon(1e-3));

  // Amplitude scaling and axis offsets do not move the result.
  auto scaled = pair;
  for (auto& v : scaled.values) v = 250.0 * v + 3.0;
  CHECK(extract_at_splitting(scaled).splitting == doctest::Approx(two.splitting).epsilon(1e-12));
  auto shifted = pair;
  for (auto& x : shifted.axis) x += 7.5e6;
  CHECK(extract_at_splitting(shifted).splitting == doctest::Approx(two.splitting).epsilon(1e-9));

  // rad/s axes are converted; other units use the supplied scale.
  auto angular = pair;
  angular.axis_units = "rad/s";
  for (auto& x : angular.axis) x *= units::two_pi;
  CHECK(extract_at_splitting(angular).splitting == doctest::Approx(10e6).epsilon(1e-3));
  auto seconds = synthetic(-2e-3, 2e-3, 4001, {{-0.5e-3, 1.0}, {0.5e-3, 1.0}}, 0.05e-3);
  CHECK(extract_at_splitting(seconds, {}, 5e9).splitting == doctest::Approx(5e6).epsilon(1e-3));
}

TEST_CASE("dominant peaks are the two most prominent") {
  const auto t = synthetic(-20e6, 20e6, 4001, {{-12e6, 0.2}, {-3e6, 1.0}, {4e6, 0.8}}, 0.5e6, "Hz");
  const auto r = extract_at_splitting(t);
  CHECK(r.peaks.size() == 3);
  CHECK(r.splitting == doctest::Approx(7e6).epsilon(1e-3));
}

TEST_CASE("simulated fluorescence doublet") {
  auto s = weak_optics();
  s.drives[3].set_rabi(units::angular(10e6));
  SignalOptions opts;
  opts.channel = Channel::fluorescence;
  const auto axis = linspace(units::angular(-10e6), units::angular(10e6), 2001);
  const auto trace = sweep(s, SweepParameter::parse(s, "coupling-detuning"), axis,
                           make_grid(295.0, units::cs133_mass, 1, 4.0), opts);
  CHECK(extract_at_splitting(trace).splitting == doctest::Approx(10e6).epsilon(0.005));
}

TEST_CASE("field calibration fit") {
  const double d = 4.24e-27;
  const double slope = 2.5e6;  // Hz per sqrt(mW)
  std::vector<CalibrationPoint> pts;
  for (double p : {-10.0, -5.0, 0.0, 3.0, 8.0}) pts.push_back({p, slope * std::sqrt(units::dbm_to_mw(p))});
  const auto fit = fit_field_calibration(pts, d);
  CHECK(fit.slope == doctest::Approx(slope).epsilon(1e-13));
  CHECK(fit.residual_rms <= 1e-9 * slope);
  CHECK(fit.c_cal == doctest::Approx(units::two_pi * units::hbar * slope / d).epsilon(1e-13));
  CHECK(fit.points.size() == 5);

  // Order of the points does not matter, bit for bit.
  std::mt19937_64 rng(5);
  for (int i = 0; i < 10; ++i) {
    auto shuffled = pts;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto again = fit_field_calibration(shuffled, d);
    CHECK(again.slope == fit.slope);
    CHECK(again.c_cal == fit.c_cal);
    CHECK(again.residual_rms == fit.residual_rms);
  }

  auto noisy = pts;
  noisy[2].splitting_hz *= 1.02;
  CHECK(fit_field_calibration(noisy, d).residual_rms > 0.0);

  std::vector<CalibrationPoint> flat{{-10.0, -1.0}, {0.0, -2.0}};
  CHECK_THROWS_AS(fit_field_calibration(flat, d), AnalysisError);
  CHECK_THROWS_AS(fit_field_calibration(std::vector<CalibrationPoint>{{0.0, 1.0}}, d), AnalysisError);
}

TEST_CASE("anchor calibration") {
  const auto fit = calibration_from_anchor(-60.0, 70e-6);
  CHECK(fit.c_cal == doctest::Approx(0.07).epsilon(1e-12));
  CHECK(fit.field_at(-60.0) == doctest::Approx(70e-6).epsilon(1e-12));
  CHECK(fit.power_for(70e-6) == doctest::Approx(-60.0).epsilon(1e-12));
  CHECK(fit.field_at(-40.0) == doctest::Approx(700e-6).epsilon(1e-12));
}

TEST_CASE("closed-loop calibration recovers the injected factor") {
  const double injected = 0.5;  // (V/m) per sqrt(mW)
  const double d = 4.24e-27;
  const auto grid = make_grid(295.0, units::cs133_mass, 1, 4.0);
  SignalOptions opts;
  opts.channel = Channel::fluorescence;
  std::vector<CalibrationPoint> pts;
  for (double p : {6.0, 10.0, 14.0}) {
    auto s = weak_optics();
    const double field = injected * std::sqrt(units::dbm_to_mw(p));
    s.drives[3].set_field(field);
    const double f = rabi_from_field(field, d) / units::two_pi;
    const auto axis = linspace(units::angular(-f), units::angular(f), 2001);
    const auto trace = sweep(s, SweepParameter::parse(s, "coupling-detuning"), axis, grid, opts);
    pts.push_back({p, extract_at_splitting(trace).splitting});
  }
  CHECK(fit_field_calibration(pts, d).c_cal == doctest::Approx(injected).epsilon(0.01));
}

TEST_CASE("sensitivity from SNR") {
  CHECK(sensitivity_from_snr(0.0, 0.0, 1.0, {1.0}) == 1.0);
  CHECK(sensitivity_from_snr(-60.0, 25.0, 10.0, {0.21368970357233266}) == doctest::Approx(38e-6).epsilon(1e-12));
  CHECK(sensitivity_from_snr(-60.0, 48.9, 1.0, {0.07}) == doctest::Approx(2.512453542515035e-07).epsilon(1e-13));
  const CalibrationFit fit{0.07};
  const double invariant = sensitivity_from_snr(-60.0, 10.0, 3.0, fit) * std::pow(10.0, 10.0 / 20.0);
  double prev = INFINITY;
  for (double snr = -20.0; snr <= 80.0; snr += 2.5) {
    const double s = sensitivity_from_snr(-60.0, snr, 3.0, fit);
    CHECK(s < prev);
    prev = s;
    CHECK(s * std::pow(10.0, snr / 20.0) == doctest::Approx(invariant).epsilon(1e-13));
  }
  CHECK_THROWS_AS(sensitivity_from_snr(-60.0, 10.0, 0.0, fit), AnalysisError);
}

TEST_CASE("heterodyne small-signal model") {
  auto s = default_scheme();
  const auto grid = make_grid(295.0, units::cs133_mass, 1, 4.0);
  HeterodyneOptions opts;
  HeterodyneSetup setup{40e-3, 0.0, 1e3, 1.0, 0.0};
  const auto zero = simulate_heterodyne(s, setup, grid, opts);
  CHECK(zero.beat_amplitude == 0.0);
  CHECK(zero.snr_db == -INFINITY);
  CHECK(zero.slope != 0.0);

  setup.sig_field = 70e-6;
  const auto r = simulate_heterodyne(s, setup, grid, opts);
  CHECK(r.beat_amplitude == doctest::Approx(std::abs(r.slope) * 70e-6).epsilon(1e-15));
  const double expected_snr = 10.0 * std::log10(r.beat_amplitude * r.beat_amplitude / default_noise_floor(Channel::transmission));
  CHECK(r.snr_db == doctest::Approx(expected_snr).epsilon(1e-13));
  setup.sig_field = 140e-6;
  CHECK(simulate_heterodyne(s, setup, grid, opts).beat_amplitude == doctest::Approx(2.0 * r.beat_amplitude).epsilon(1e-14));
  CHECK(r.warnings.empty());

  setup.sig_field = 0.1;
  CHECK_FALSE(simulate_heterodyne(s, setup, grid, opts).warnings.empty());

  setup.sig_field = 70e-6;
  setup.noise_floor = 1e-10;
  CHECK(simulate_heterodyne(s, setup, grid, opts).snr_db == doctest::Approx(r.snr_db - 20.0).epsilon(1e-12));

  auto empty = s;
  empty.number_density = 0.0;
  const auto flat = simulate_heterodyne(empty, setup, grid, opts);
  CHECK(flat.zero_slope);
  CHECK(flat.beat_amplitude == 0.0);

  setup.lo_field = 0.0;
  CHECK_THROWS_AS(simulate_heterodyne(s, setup, grid, opts), ValidationError);
}

TEST_CASE("two-tone solve agrees with the slope model") {
  const auto s = default_scheme();
  const auto grid = make_grid(295.0, units::cs133_mass, 1, 4.0);
  for (auto ch : {Channel::transmission, Channel::fluorescence}) {
    HeterodyneOptions opts;
    opts.signal.channel = ch;
    for (double ratio : {0.01, 0.1}) {
      const HeterodyneSetup setup{40e-3, ratio * 40e-3, 1e3, 1.0, 0.0};
      const double slope_model = simulate_heterodyne(s, setup, grid, opts).beat_amplitude;
      const double full = two_tone_beat_amplitude(s, setup, grid, opts);
      CAPTURE(ratio);
      CHECK(full == doctest::Approx(slope_model).epsilon(0.01));
    }
  }
}

TEST_CASE("sensitivity map") {
  const auto s = default_scheme();
  const auto grid = make_grid(295.0, units::cs133_mass, 1, 4.0);
  SensitivityMapOptions opts;
  const std::vector<double> powers{20e-6, 50e-6}, fields{5e-3, 40e-3, 0.0};
  const auto map = sensitivity_map(s, powers, fields, grid, opts);
  REQUIRE(map.sensitivity.size() == 6);
  CHECK(std::isnan(map.at(0, 2)));
  CHECK(map.failures.size() == 2);
  for (std::size_t ip = 0; ip < 2; ++ip) {
    for (std::size_t il = 0; il < 2; ++il) CHECK(map.at(ip, il) > 0.0);
  }

  // A single cell equals the scalar pipeline.
  auto one = s;
  SweepParameter::parse(s, "probe-power").apply(one, 50e-6);
  const auto r = simulate_heterodyne(one, {40e-3, 70e-6, 1e3, 1.0, 0.0}, grid, opts.heterodyne);
  const double scalar = sensitivity_from_snr(opts.calibration.power_for(70e-6), r.snr_db, 1.0, opts.calibration);
  const auto cell = sensitivity_map(s, std::vector<double>{50e-6}, std::vector<double>{40e-3}, grid, opts);
  CHECK(cell.at(0, 0) == scalar);
  CHECK(cell.at(0, 0) == map.at(1, 1));

  // Halving the noise floor scales every entry by 1/sqrt(2).
  SensitivityMapOptions quiet = opts, half = opts;
  quiet.noise_floor = 1e-12;
  half.noise_floor = 0.5e-12;
  const auto a = sensitivity_map(s, powers, std::vector<double>{5e-3, 40e-3}, grid, quiet);
  const auto b = sensitivity_map(s, powers, std::vector<double>{5e-3, 40e-3}, grid, half);
  for (std::size_t i = 0; i < a.sensitivity.size(); ++i) {
    CHECK(b.sensitivity[i] == doctest::Approx(a.sensitivity[i] / std::sqrt(2.0)).epsilon(1e-13));
  }

  const auto [best, ip, il] = a.minimum();
  CHECK(best == *std::min_element(a.sensitivity.begin(), a.sensitivity.end()));
  CHECK(a.at(ip, il) == best);
  CHECK_THROWS_AS(sensitivity_map(s, std::vector<double>{}, fields, grid, opts), ValidationError);
}

}  // TEST_SUITE
