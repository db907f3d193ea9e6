#include "rydelec/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "rydelec/atomscheme.hpp"
#include "rydelec/calibrate.hpp"
#include "rydelec/doppler.hpp"
#include "rydelec/dynamics.hpp"
#include "rydelec/error.hpp"
#include "rydelec/ingest.hpp"
#include "rydelec/observables.hpp"
#include "rydelec/units.hpp"

namespace rydelec::cli {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;
using units::Dimension;

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

namespace {

// ---------------------------------------------------------------------------------------------
// Option parsing helpers

std::vector<std::string> split(std::string_view text, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = text.find(delim, start);
    out.emplace_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::size_t parse_count(std::string_view text) {
  const double v = units::parse_number(text);
  if (!(v >= 1.0) || v != std::floor(v) || v > 1e7) throw ParseError("expected a positive count, got '" + std::string(text) + "'");
  return static_cast<std::size_t>(v);
}

// Frequencies on detuning and Rabi knobs are given in cycles per second.
double knob_value(const SweepParameter& p, std::string_view text) {
  switch (p.kind) {
    case SweepParameter::Kind::detuning:
    case SweepParameter::Kind::rabi: return units::angular(units::parse_quantity(text, Dimension::frequency));
    case SweepParameter::Kind::field: return units::parse_quantity(text, Dimension::field);
    case SweepParameter::Kind::power: return units::parse_quantity(text, Dimension::power);
  }
  return 0.0;
}

// "START:STOP:N" or "a,b,c".
template <class Convert>
std::vector<double> parse_values(std::string_view text, Convert convert) {
  if (text.find(':') != std::string_view::npos) {
    const auto parts = split(text, ':');
    if (parts.size() != 3) throw ParseError("range must look like START:STOP:N, got '" + std::string(text) + "'");
    return linspace(convert(parts[0]), convert(parts[1]), parse_count(parts[2]));
  }
  std::vector<double> out;
  for (const auto& item : split(text, ',')) out.push_back(convert(item));
  return out;
}

std::vector<double> parse_values(std::string_view text, Dimension dim) {
  return parse_values(text, [dim](std::string_view s) { return units::parse_quantity(s, dim); });
}

struct Sweep {
  SweepParameter parameter;
  std::vector<double> values;
};

// "NAME:START:STOP:N" or "NAME:a,b,c".
Sweep parse_sweep(const LadderScheme& scheme, std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw ParseError("sweep must look like NAME:START:STOP:N, got '" + std::string(text) + "'");
  }
  Sweep s{SweepParameter::parse(scheme, text.substr(0, colon)), {}};
  s.values = parse_values(text.substr(colon + 1), [&](std::string_view v) { return knob_value(s.parameter, v); });
  return s;
}

// ---------------------------------------------------------------------------------------------
// Options shared by the simulating subcommands

struct Common {
  std::string scheme_path;
  std::vector<std::string> sets;
  std::string rf_field;
  std::string probe_power;
  unsigned threads = 0;
  std::size_t doppler_points = 201;
  double doppler_span = 4.0;
  std::string quadrature = "trapezoid";
  std::string channel = "transmission";
  double collection_efficiency = 1e-3;
  std::string band_center = "510nm";
  std::string band_fwhm = "10nm";
  double detector_gain = 1.0;
  std::vector<std::string> transfers;
  std::string output;
  std::string manifest;
};

void add_scheme_options(CLI::App* sub, Common& c) {
  sub->add_option("--scheme", c.scheme_path, std::string("Scheme file (default: $") + scheme_env + " or the built-in Cs ladder)");
  sub->add_option("--set", c.sets, "Override a drive knob, NAME=VALUE, e.g. coupling-detuning=2MHz, dressing-power=5mW");
  sub->add_option("--rf-field", c.rf_field, "RF field amplitude, e.g. 20mV/m");
  sub->add_option("--probe-power", c.probe_power, "Probe beam power, e.g. 50uW");
}

void add_solver_options(CLI::App* sub, Common& c) {
  sub->add_option("--threads", c.threads, "Worker threads, 0 = all cores; results do not depend on it")->capture_default_str();
  sub->add_option("--doppler-points", c.doppler_points, "Velocity nodes")->capture_default_str();
  sub->add_option("--doppler-span", c.doppler_span, "Velocity span in thermal sigmas")->capture_default_str();
  sub->add_option("--quadrature", c.quadrature, "trapezoid | gauss-hermite")->capture_default_str();
  sub->add_option("--channel", c.channel, "transmission | fluorescence")->capture_default_str();
  sub->add_option("--collection-efficiency", c.collection_efficiency, "Fluorescence collection efficiency")->capture_default_str();
  sub->add_option("--band-center", c.band_center, "Fluorescence filter center")->capture_default_str();
  sub->add_option("--band-fwhm", c.band_fwhm, "Fluorescence filter width")->capture_default_str();
  sub->add_option("--detector-gain", c.detector_gain, "Counts per detected photon")->capture_default_str();
  sub->add_option("--transfer", c.transfers, "Incoherent transfer SOURCE:TARGET:RATE, e.g. 3:4:1kHz");
}

void add_output_options(CLI::App* sub, Common& c, const std::string& default_output) {
  c.output = default_output;
  sub->add_option("-o,--output", c.output, "Data output path")->capture_default_str();
  sub->add_option("--manifest", c.manifest, "Run manifest path (default: <output>.manifest.json)");
}

struct Loaded {
  LadderScheme scheme;
  std::string source;
};

Loaded load(const Common& c) {
  Loaded l;
  std::string path = c.scheme_path;
  if (path.empty()) {
    if (const char* env = std::getenv(scheme_env); env && *env) path = env;
  }
  if (path.empty()) {
    l.scheme = default_scheme();
    l.source = "built-in";
  } else {
    l.scheme = load_scheme_file(path);
    l.source = path;
  }
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ParseError("--set expects NAME=VALUE, got '" + s + "'");
    const auto p = SweepParameter::parse(l.scheme, std::string_view(s).substr(0, eq));
    p.apply(l.scheme, knob_value(p, std::string_view(s).substr(eq + 1)));
  }
  if (!c.rf_field.empty()) {
    SweepParameter::parse(l.scheme, "rf-field").apply(l.scheme, units::parse_quantity(c.rf_field, Dimension::field));
  }
  if (!c.probe_power.empty()) {
    SweepParameter::parse(l.scheme, "probe-power").apply(l.scheme, units::parse_quantity(c.probe_power, Dimension::power));
  }
  validate(l.scheme);
  return l;
}

VelocityGrid grid_for(const Common& c, const LadderScheme& scheme) {
  Quadrature rule;
  if (c.quadrature == "trapezoid") {
    rule = Quadrature::trapezoid;
  } else if (c.quadrature == "gauss-hermite") {
    rule = Quadrature::gauss_hermite;
  } else {
    throw ValidationError("unknown quadrature '" + c.quadrature + "' (trapezoid | gauss-hermite)");
  }
  return make_grid(scheme.temperature, scheme.atom_mass, c.doppler_points, c.doppler_span, rule);
}

SignalOptions signal_for(const Common& c) {
  SignalOptions o;
  o.channel = parse_channel(c.channel);
  o.threads = c.threads;
  o.fluorescence.collection_efficiency = c.collection_efficiency;
  o.fluorescence.band_center = units::parse_quantity(c.band_center, Dimension::length);
  o.fluorescence.band_fwhm = units::parse_quantity(c.band_fwhm, Dimension::length);
  o.fluorescence.detector_gain = c.detector_gain;
  for (const auto& t : c.transfers) {
    const auto parts = split(t, ':');
    if (parts.size() != 3) throw ParseError("--transfer expects SOURCE:TARGET:RATE, got '" + t + "'");
    o.transfers.push_back({static_cast<std::size_t>(units::parse_number(parts[0])),
                           static_cast<std::size_t>(units::parse_number(parts[1])),
                           units::angular(units::parse_quantity(parts[2], Dimension::frequency))});
  }
  return o;
}

// ---------------------------------------------------------------------------------------------
// Outputs and manifest

void write_file(const std::string& path, std::string_view bytes) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("failed writing '" + path + "'");
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json option_values(const CLI::App* sub) {
  json params = json::object();
  for (const CLI::Option* o : sub->get_options()) {
    const std::string name = o->get_single_name();
    if (name == "help") continue;
    if (o->get_expected_min() == 0) {
      params[name] = o->count() > 0;
    } else if (o->count() > 0) {
      const auto r = o->results();
      params[name] = o->get_expected_max() > 1 || r.size() != 1 ? json(r) : json(r.front());
    } else if (!o->get_default_str().empty()) {
      params[name] = o->get_default_str();
    } else {
      params[name] = nullptr;
    }
  }
  return params;
}

struct Run {
  const CLI::App* sub = nullptr;
  std::optional<Loaded> scheme;
  std::vector<std::string> outputs;
  json summary = json::object();
};

void write_manifest(const Run& run, const Common& c) {
  json m;
  m["schema_version"] = manifest_schema_version;
  m["subcommand"] = run.sub->get_name();
  m["toolkit_version"] = RYDELEC_VERSION;
  m["parameters"] = option_values(run.sub);
  if (run.scheme) {
    const std::string canonical = serialize_scheme(run.scheme->scheme);
    m["scheme"] = {{"source", run.scheme->source},
                   {"sha256", sha256_hex(canonical)},
                   {"resolved", json::parse(canonical)}};
  }
  m["outputs"] = run.outputs;
  m["summary"] = run.summary;
  const std::string path = c.manifest.empty() ? c.output + ".manifest.json" : c.manifest;
  write_file(path, dump(m));
}

json peaks_json(const std::vector<Peak>& peaks) {
  json out = json::array();
  for (const auto& p : peaks) out.push_back({{"center", p.center}, {"height", p.height}, {"prominence", p.prominence}});
  return out;
}

json fit_json(const CalibrationFit& fit) {
  json points = json::array();
  for (const auto& p : fit.points) points.push_back({{"power_dbm", p.power_dbm}, {"splitting_hz", p.splitting_hz}});
  return {{"c_cal", fit.c_cal}, {"slope", fit.slope}, {"residual_rms", fit.residual_rms}, {"points", points}};
}

// ---------------------------------------------------------------------------------------------
// Subcommands

struct SpectrumArgs {
  Common c;
  std::string sweep;
};

// Angular knobs are written in Hz, the unit they are typed in.
bool angular_knob(const SweepParameter& p) {
  return p.kind == SweepParameter::Kind::detuning || p.kind == SweepParameter::Kind::rabi;
}

void to_hz(std::vector<double>& axis, std::string& units_label) {
  for (auto& v : axis) v /= units::two_pi;
  units_label = "Hz";
}

void spectrum(Run& run, const SpectrumArgs& a) {
  run.scheme = load(a.c);
  const auto& scheme = run.scheme->scheme;
  const auto s = parse_sweep(scheme, a.sweep);
  auto trace = sweep(scheme, s.parameter, s.values, grid_for(a.c, scheme), signal_for(a.c));
  if (angular_knob(s.parameter)) to_hz(trace.axis, trace.axis_units);
  write_file(a.c.output, write_trace(trace));
  run.outputs.push_back(a.c.output);
  run.summary["points"] = trace.axis.size();
  if (s.parameter.kind == SweepParameter::Kind::detuning) {
    const auto split = extract_at_splitting(trace);
    run.summary["split"] = split.split;
    run.summary["splitting_hz"] = split.splitting;
    run.summary["peaks"] = peaks_json(split.peaks);
  }
}

struct MapArgs {
  Common c;
  std::string x, y;
};

void map_cmd(Run& run, const MapArgs& a) {
  run.scheme = load(a.c);
  const auto& scheme = run.scheme->scheme;
  const auto x = parse_sweep(scheme, a.x);
  const auto y = parse_sweep(scheme, a.y);
  auto m = signal_map(scheme, x.parameter, x.values, y.parameter, y.values, grid_for(a.c, scheme), signal_for(a.c));
  if (angular_knob(x.parameter)) to_hz(m.x, m.x_units);
  if (angular_knob(y.parameter)) to_hz(m.y, m.y_units);
  RawTrace raw;
  raw.metadata["x_units"] = m.x_units;
  raw.metadata["y_units"] = m.y_units;
  raw.metadata["units"] = m.units;
  raw.columns = {m.x_name, m.y_name, "value"};
  for (std::size_t iy = 0; iy < m.y.size(); ++iy) {
    for (std::size_t ix = 0; ix < m.x.size(); ++ix) raw.rows.push_back({m.x[ix], m.y[iy], m.at(ix, iy)});
  }
  write_file(a.c.output, write_raw(raw));
  run.outputs.push_back(a.c.output);
  run.summary["shape"] = {m.x.size(), m.y.size()};
}

struct CalibrateArgs {
  Common c;
  std::vector<std::string> traces;
  std::string axis_column = "detuning";
  std::string value_column = "signal";
  std::string axis_units = "Hz";
  std::string scan_trace;
  std::string scan_axis_column = "time";
  std::string scan_value_column = "signal";
  std::string sideband;
  bool simulate = false;
  double c_cal = 0.0;
  std::string powers;
  std::string sweep;
  double dipole = 0.0;
};

void calibrate_cmd(Run& run, const CalibrateArgs& a) {
  std::vector<CalibrationPoint> points;
  json per_trace = json::array();
  double dipole = a.dipole;

  if (a.simulate) {
    if (!(a.c_cal > 0.0)) throw UsageError("--simulate needs --c-cal > 0");
    if (a.powers.empty() || a.sweep.empty()) throw UsageError("--simulate needs --powers and --sweep");
    run.scheme = load(a.c);
    const auto& scheme = run.scheme->scheme;
    const auto rf = scheme.rf_drive_index();
    if (!rf) throw ValidationError("scheme has no RF drive");
    if (dipole == 0.0) dipole = scheme.drives[*rf].dipole_moment;
    const auto s = parse_sweep(scheme, a.sweep);
    const auto grid = grid_for(a.c, scheme);
    const auto opts = signal_for(a.c);
    const auto injected = CalibrationFit{a.c_cal, 0.0, 0.0, {}};
    for (const double p_w : parse_values(a.powers, Dimension::power)) {
      const double dbm = units::mw_to_dbm(p_w * 1e3);
      LadderScheme at = scheme;
      at.drives[*rf].set_field(injected.field_at(dbm));
      const auto split = extract_at_splitting(sweep(at, s.parameter, s.values, grid, opts));
      if (!split.split) throw AnalysisError("no doublet at " + units::format_number(dbm) + " dBm");
      points.push_back({dbm, split.splitting});
      per_trace.push_back({{"power_dbm", dbm}, {"splitting_hz", split.splitting}, {"peaks", peaks_json(split.peaks)}});
    }
  } else {
    if (a.traces.empty()) throw UsageError("give --trace FILE@POWER at least twice, or --simulate");
    if (!(dipole > 0.0)) {
      run.scheme = load(a.c);
      const auto rf = run.scheme->scheme.rf_drive_index();
      if (!rf) throw ValidationError("scheme has no RF drive; pass --dipole");
      dipole = run.scheme->scheme.drives[*rf].dipole_moment;
    }
    double hz_per_unit = 1.0;
    if (!a.scan_trace.empty()) {
      if (a.sideband.empty()) throw UsageError("--scan-trace needs --sideband");
      const auto scan = std::get<SpectrumTrace>(parse_trace(
          read_raw(a.scan_trace), ColumnMapping{TraceKind::spectrum, a.scan_axis_column, a.scan_value_column, a.axis_units, ""}));
      hz_per_unit = calibrate_scan_axis(scan, units::parse_quantity(a.sideband, Dimension::frequency));
      run.summary["hz_per_axis_unit"] = hz_per_unit;
    }
    for (const auto& item : a.traces) {
      const auto at = item.rfind('@');
      if (at == std::string::npos) throw ParseError("--trace expects FILE@POWER, got '" + item + "'");
      const double dbm = units::mw_to_dbm(units::parse_quantity(std::string_view(item).substr(at + 1), Dimension::power) * 1e3);
      const auto trace = std::get<SpectrumTrace>(parse_trace(
          read_raw(item.substr(0, at)), ColumnMapping{TraceKind::spectrum, a.axis_column, a.value_column, a.axis_units, ""}));
      const auto split = extract_at_splitting(trace, {}, hz_per_unit);
      if (!split.split) throw AnalysisError("no doublet in '" + item.substr(0, at) + "'");
      points.push_back({dbm, split.splitting});
      per_trace.push_back({{"trace", item.substr(0, at)}, {"power_dbm", dbm}, {"splitting_hz", split.splitting},
                           {"peaks", peaks_json(split.peaks)}});
    }
  }
  const auto fit = fit_field_calibration(points, dipole);
  json result = fit_json(fit);
  result["dipole"] = dipole;
  result["traces"] = per_trace;
  write_file(a.c.output, dump(result));
  run.outputs.push_back(a.c.output);
  run.summary = {{"c_cal", fit.c_cal}, {"slope", fit.slope}};
}

struct HeterodyneArgs {
  Common c;
  std::string lo_field = "40mV/m";
  std::string sig_field = "70uV/m";
  std::string beat = "1kHz";
  std::string rbw = "1Hz";
  double noise_floor = 0.0;
  double relative_step = 1e-2;
  bool two_tone = false;
};

void heterodyne_cmd(Run& run, const HeterodyneArgs& a, std::ostream& err) {
  run.scheme = load(a.c);
  const auto& scheme = run.scheme->scheme;
  const auto grid = grid_for(a.c, scheme);
  HeterodyneOptions opts{signal_for(a.c), a.relative_step};
  HeterodyneSetup setup{units::parse_quantity(a.lo_field, Dimension::field), units::parse_quantity(a.sig_field, Dimension::field),
                        units::parse_quantity(a.beat, Dimension::frequency), units::parse_quantity(a.rbw, Dimension::frequency),
                        a.noise_floor};
  const auto r = simulate_heterodyne(scheme, setup, grid, opts);
  for (const auto& w : r.warnings) err << json{{"warning", w}}.dump() << "\n";
  json result = {{"channel", to_string(opts.signal.channel)},
                 {"lo_field", setup.lo_field},
                 {"sig_field", setup.sig_field},
                 {"beat_frequency", setup.beat_frequency},
                 {"rbw", setup.rbw},
                 {"noise_floor", setup.noise_floor > 0.0 ? setup.noise_floor : default_noise_floor(opts.signal.channel)},
                 {"slope", r.slope},
                 {"beat_amplitude", r.beat_amplitude},
                 {"snr_db", std::isfinite(r.snr_db) ? json(r.snr_db) : json(nullptr)},
                 {"zero_slope", r.zero_slope}};
  if (a.two_tone) result["two_tone_beat_amplitude"] = two_tone_beat_amplitude(scheme, setup, grid, opts);
  write_file(a.c.output, dump(result));
  run.outputs.push_back(a.c.output);
  run.summary = {{"snr_db", result["snr_db"]}, {"beat_amplitude", r.beat_amplitude}};
}

struct SensitivityArgs {
  Common c;
  std::string probe_powers = "10uW,50uW,100uW";
  std::string lo_fields = "1mV/m:100mV/m:12";
  std::string sig_field = "70uV/m";
  std::string rbw = "1Hz";
  std::string beat = "1kHz";
  double noise_floor = 0.0;
  std::string anchor = "-60dBm:70uV/m";
  double c_cal = 0.0;
  std::string table;
  std::string p_sig = "-60dBm";
};

CalibrationFit calibration_for(const SensitivityArgs& a) {
  if (a.c_cal > 0.0) return CalibrationFit{a.c_cal, 0.0, 0.0, {}};
  const auto parts = split(a.anchor, ':');
  if (parts.size() != 2) throw ParseError("--anchor expects POWER:FIELD, got '" + a.anchor + "'");
  const double dbm = units::mw_to_dbm(units::parse_quantity(parts[0], Dimension::power) * 1e3);
  return calibration_from_anchor(dbm, units::parse_quantity(parts[1], Dimension::field));
}

void sensitivity_cmd(Run& run, const SensitivityArgs& a, std::ostream& err) {
  const auto fit = calibration_for(a);
  SensitivityMap map;
  if (!a.table.empty()) {
    const auto table = parse_snr_table(read_raw(a.table));
    for (const auto& w : table.warnings) err << json{{"warning", w}}.dump() << "\n";
    const double p_sig = units::mw_to_dbm(units::parse_quantity(a.p_sig, Dimension::power) * 1e3);
    map = sensitivity_map_from_table(table, p_sig, units::parse_quantity(a.rbw, Dimension::frequency), fit);
  } else {
    run.scheme = load(a.c);
    const auto& scheme = run.scheme->scheme;
    SensitivityMapOptions opts;
    opts.heterodyne.signal = signal_for(a.c);
    opts.sig_field = units::parse_quantity(a.sig_field, Dimension::field);
    opts.rbw = units::parse_quantity(a.rbw, Dimension::frequency);
    opts.beat_frequency = units::parse_quantity(a.beat, Dimension::frequency);
    opts.noise_floor = a.noise_floor;
    opts.calibration = fit;
    map = sensitivity_map(scheme, parse_values(a.probe_powers, Dimension::power), parse_values(a.lo_fields, Dimension::field),
                          grid_for(a.c, scheme), opts);
  }
  for (const auto& f : map.failures) err << json{{"warning", f}}.dump() << "\n";
  RawTrace raw;
  raw.metadata["units"] = "V m^-1 Hz^-1/2";
  raw.columns = {"probe_power", "lo_field", "snr_db", "sensitivity"};
  const auto nan_safe = [](double v) { return std::isfinite(v) ? v : 0.0; };
  std::vector<std::vector<double>> rows;
  for (std::size_t ip = 0; ip < map.probe_powers.size(); ++ip) {
    for (std::size_t il = 0; il < map.lo_fields.size(); ++il) {
      const std::size_t cell = ip * map.lo_fields.size() + il;
      if (!std::isfinite(map.sensitivity[cell])) continue;
      raw.rows.push_back({map.probe_powers[ip], map.lo_fields[il], nan_safe(map.snr_db[cell]), map.sensitivity[cell]});
    }
  }
  write_file(a.c.output, write_raw(raw));
  run.outputs.push_back(a.c.output);
  const auto [best, ip, il] = map.minimum();
  run.summary = {{"c_cal", fit.c_cal}, {"failures", map.failures.size()}};
  if (std::isfinite(best)) {
    run.summary["minimum"] = {{"sensitivity", best}, {"probe_power", map.probe_powers[ip]}, {"lo_field", map.lo_fields[il]}};
  }
}

struct BandwidthArgs {
  Common c;
  bool simulate = false;
  std::string rf_on_field = "1V/m";
  std::string period = "100us";
  std::size_t samples = 10000;
  std::string trace;
  std::string time_column = "time";
  std::string value_column = "signal";
  std::string time_units = "s";
  std::string first_edge;
  std::string first_kind = "rise";
  std::size_t edge_count = 0;
  std::string decay_budget;
};

void bandwidth_cmd(Run& run, const BandwidthArgs& a) {
  if (a.simulate == !a.trace.empty()) throw UsageError("bandwidth needs exactly one of --simulate or --trace");
  const double period = units::parse_quantity(a.period, Dimension::time);
  TimeTrace trace;
  std::vector<Edge> edges;
  if (a.simulate) {
    run.scheme = load(a.c);
    const auto& scheme = run.scheme->scheme;
    SquareWaveOptions opts;
    opts.signal = signal_for(a.c);
    auto r = simulate_square_wave(scheme, units::parse_quantity(a.rf_on_field, Dimension::field), period, a.samples,
                                  grid_for(a.c, scheme), opts);
    trace = std::move(r.trace);
    edges = std::move(r.edges);
    run.summary["cycles_to_periodic"] = r.cycles;
  } else {
    trace = std::get<TimeTrace>(parse_trace(read_raw(a.trace),
                                            ColumnMapping{TraceKind::time, a.time_column, a.value_column, a.time_units, ""}));
    if (a.first_kind != "rise" && a.first_kind != "fall") throw ParseError("--first-kind must be rise or fall");
    const double first = a.first_edge.empty() ? trace.times.front() + 0.5 * period
                                              : units::parse_quantity(a.first_edge, Dimension::time);
    std::size_t count = a.edge_count;
    if (count == 0) {
      while (first + 0.5 * period * static_cast<double>(count) < trace.times.back()) ++count;
    }
    edges = square_wave_edges(first, period, count, a.first_kind == "rise");
  }
  const auto rf = extract_rise_fall(trace, edges);
  json per_edge = json::array();
  for (const auto& e : rf.edges) {
    per_edge.push_back({{"time", e.edge.time}, {"kind", e.edge.on ? "rise" : "fall"}, {"tau", e.tau}, {"amplitude", e.amplitude}});
  }
  json result = {{"tau_rise", rf.tau_rise}, {"tau_rise_std", rf.tau_rise_std},
                 {"tau_fall", rf.tau_fall}, {"tau_fall_std", rf.tau_fall_std}};
  if (rf.tau_rise > 0.0) result["bw_rise"] = bandwidth_from_tau(rf.tau_rise);
  if (rf.tau_fall > 0.0) result["bw_fall"] = bandwidth_from_tau(rf.tau_fall);
  const double slower = std::max(rf.tau_rise, rf.tau_fall);
  if (slower > 0.0) result["bw"] = bandwidth_from_tau(slower);
  result["edges"] = per_edge;
  if (!a.decay_budget.empty()) {
    const auto parts = split(a.decay_budget, ',');
    if (parts.size() != 3) throw ParseError("--decay-budget expects TAU_MEAS,T_BBR,T_RYDRYD");
    const auto b = decay_decomposition(units::parse_quantity(parts[0], Dimension::time),
                                       units::parse_quantity(parts[1], Dimension::time),
                                       units::parse_quantity(parts[2], Dimension::time));
    result["decay_budget"] = {{"tau_meas", b.tau_meas}, {"t_bbr", b.t_bbr}, {"t_rydryd", b.t_rydryd},
                              {"gamma_col", b.gamma_col}, {"negative", b.negative}};
  }
  write_file(a.c.output, dump(result));
  run.outputs.push_back(a.c.output);
  if (a.simulate) {
    const std::string trace_path = a.c.output + ".trace.csv";
    write_file(trace_path, write_trace(trace));
    run.outputs.push_back(trace_path);
  }
  run.summary["tau_rise"] = rf.tau_rise;
  run.summary["tau_fall"] = rf.tau_fall;
}

struct IngestArgs {
  Common c;
  std::string input;
  std::string kind = "spectrum";
  std::string axis_column = "x";
  std::string value_column = "y";
  std::string axis_units = "s";
  std::string value_units;
  SnrMapping snr;
};

void ingest_cmd(Run& run, const IngestArgs& a, std::ostream& err) {
  const auto raw = read_raw(a.input);
  std::string canonical;
  if (a.kind == "snr") {
    const auto table = parse_snr_table(raw, a.snr);
    for (const auto& w : table.warnings) err << json{{"warning", w}}.dump() << "\n";
    RawTrace out;
    out.columns = {"probe_power", "lo_field", "snr_db"};
    for (const auto& r : table.records) out.rows.push_back({r.probe_power, r.lo_field, r.snr_db});
    canonical = write_raw(out);
    run.summary["records"] = table.records.size();
    run.summary["warnings"] = table.warnings.size();
  } else if (a.kind == "spectrum" || a.kind == "time") {
    const auto kind = a.kind == "time" ? TraceKind::time : TraceKind::spectrum;
    const auto trace = parse_trace(raw, ColumnMapping{kind, a.axis_column, a.value_column, a.axis_units, a.value_units});
    canonical = std::visit([](const auto& t) { return write_trace(t); }, trace);
    run.summary["points"] = raw.rows.size();
  } else {
    throw UsageError("--kind must be spectrum, time or snr");
  }
  write_file(a.c.output, canonical);
  run.outputs.push_back(a.c.output);
  run.summary["input_sha256"] = sha256_hex(write_raw(raw));
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage: return usage_error;
    case ErrorKind::parse: return parse_error;
    case ErrorKind::validation: return validation_error;
    case ErrorKind::solver: return solver_error;
    case ErrorKind::analysis: return analysis_error;
  }
  return internal_error;
}

void diagnostic(std::ostream& err, const char* kind, const std::string& message, const ParseError* pe = nullptr) {
  json d = {{"kind", kind}, {"message", message}};
  if (pe && pe->line() > 0) d["line"] = pe->line();
  if (pe && !pe->field().empty()) d["field"] = pe->field();
  err << json{{"error", d}}.dump() << "\n";
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rydberg-atom RF electrometry: steady-state and time-domain simulation, calibration and analysis"};
  app.name(argc > 0 ? fs::path(argv[0]).filename().string() : "rydelec");
  app.require_subcommand(1);
  app.set_version_flag("--version", RYDELEC_VERSION);
  app.footer("Exit codes: 0 ok, 2 usage, 3 parse, 4 validation, 5 solver, 6 analysis, 1 internal.");

  SpectrumArgs sa;
  auto* spectrum_sub = app.add_subcommand("spectrum", "Steady-state signal along one swept knob (CSV)");
  add_scheme_options(spectrum_sub, sa.c);
  add_solver_options(spectrum_sub, sa.c);
  add_output_options(spectrum_sub, sa.c, "spectrum.csv");
  spectrum_sub->add_option("--sweep", sa.sweep, "KNOB:START:STOP:N, e.g. coupling-detuning:-30MHz:30MHz:601")->required();

  MapArgs ma;
  auto* map_sub = app.add_subcommand("map", "Steady-state signal over two knobs (CSV, x fastest)");
  add_scheme_options(map_sub, ma.c);
  add_solver_options(map_sub, ma.c);
  add_output_options(map_sub, ma.c, "map.csv");
  map_sub->add_option("--x", ma.x, "KNOB:START:STOP:N")->required();
  map_sub->add_option("--y", ma.y, "KNOB:START:STOP:N")->required();

  CalibrateArgs ca;
  auto* cal_sub = app.add_subcommand("calibrate", "Field calibration from Autler-Townes splittings (JSON)");
  add_scheme_options(cal_sub, ca.c);
  add_solver_options(cal_sub, ca.c);
  add_output_options(cal_sub, ca.c, "calibration.json");
  cal_sub->add_option("--trace", ca.traces, "Measured spectrum FILE@POWER, e.g. at.csv@-20dBm (repeat)");
  cal_sub->add_option("--axis-column", ca.axis_column)->capture_default_str();
  cal_sub->add_option("--value-column", ca.value_column)->capture_default_str();
  cal_sub->add_option("--axis-units", ca.axis_units, "Axis unit in the trace files (Hz, MHz, s, ms, ...)")->capture_default_str();
  cal_sub->add_option("--scan-trace", ca.scan_trace, "Sideband trace for the scan-axis scale");
  cal_sub->add_option("--scan-axis-column", ca.scan_axis_column)->capture_default_str();
  cal_sub->add_option("--scan-value-column", ca.scan_value_column)->capture_default_str();
  cal_sub->add_option("--sideband", ca.sideband, "Modulation sideband frequency, e.g. 5MHz");
  cal_sub->add_flag("--simulate", ca.simulate, "Simulate the spectra instead of reading traces");
  cal_sub->add_option("--c-cal", ca.c_cal, "Injected calibration factor for --simulate, (V/m)/sqrt(mW)");
  cal_sub->add_option("--powers", ca.powers, "RF powers for --simulate, e.g. -10dBm,-5dBm,0dBm");
  cal_sub->add_option("--sweep", ca.sweep, "Detuning sweep for --simulate");
  cal_sub->add_option("--dipole", ca.dipole, "RF transition dipole, C m (default: from the scheme)");

  HeterodyneArgs ha;
  auto* het_sub = app.add_subcommand("heterodyne", "Small-signal heterodyne beat and SNR (JSON)");
  add_scheme_options(het_sub, ha.c);
  add_solver_options(het_sub, ha.c);
  add_output_options(het_sub, ha.c, "heterodyne.json");
  het_sub->add_option("--lo-field", ha.lo_field)->capture_default_str();
  het_sub->add_option("--sig-field", ha.sig_field)->capture_default_str();
  het_sub->add_option("--beat", ha.beat)->capture_default_str();
  het_sub->add_option("--rbw", ha.rbw)->capture_default_str();
  het_sub->add_option("--noise-floor", ha.noise_floor, "Signal units^2/Hz, 0 = channel default")->capture_default_str();
  het_sub->add_option("--relative-step", ha.relative_step, "Finite-difference step relative to the LO field")->capture_default_str();
  het_sub->add_flag("--two-tone", ha.two_tone, "Also run the two-tone time-domain solve");

  SensitivityArgs sea;
  auto* sens_sub = app.add_subcommand("sensitivity-map", "Sensitivity over probe power and LO field (CSV)");
  add_scheme_options(sens_sub, sea.c);
  add_solver_options(sens_sub, sea.c);
  add_output_options(sens_sub, sea.c, "sensitivity.csv");
  sens_sub->add_option("--probe-powers", sea.probe_powers, "List or START:STOP:N")->capture_default_str();
  sens_sub->add_option("--lo-fields", sea.lo_fields, "List or START:STOP:N")->capture_default_str();
  sens_sub->add_option("--sig-field", sea.sig_field)->capture_default_str();
  sens_sub->add_option("--rbw", sea.rbw)->capture_default_str();
  sens_sub->add_option("--beat", sea.beat)->capture_default_str();
  sens_sub->add_option("--noise-floor", sea.noise_floor, "Signal units^2/Hz, 0 = channel default")->capture_default_str();
  sens_sub->add_option("--anchor", sea.anchor, "Calibration anchor POWER:FIELD")->capture_default_str();
  sens_sub->add_option("--c-cal", sea.c_cal, "Calibration factor, overrides --anchor");
  sens_sub->add_option("--table", sea.table, "Measured SNR table instead of simulation");
  sens_sub->add_option("--p-sig", sea.p_sig, "Signal power for --table")->capture_default_str();

  BandwidthArgs ba;
  auto* bw_sub = app.add_subcommand("bandwidth", "90/10 rise and fall times and bandwidth (JSON)");
  add_scheme_options(bw_sub, ba.c);
  add_solver_options(bw_sub, ba.c);
  add_output_options(bw_sub, ba.c, "bandwidth.json");
  bw_sub->add_flag("--simulate", ba.simulate, "Simulate an RF square wave");
  bw_sub->add_option("--rf-on-field", ba.rf_on_field)->capture_default_str();
  bw_sub->add_option("--period", ba.period)->capture_default_str();
  bw_sub->add_option("--samples", ba.samples, "Samples per period")->capture_default_str();
  bw_sub->add_option("--trace", ba.trace, "Measured time trace");
  bw_sub->add_option("--time-column", ba.time_column)->capture_default_str();
  bw_sub->add_option("--value-column", ba.value_column)->capture_default_str();
  bw_sub->add_option("--time-units", ba.time_units)->capture_default_str();
  bw_sub->add_option("--first-edge", ba.first_edge, "Time of the first edge in the trace (default: start + period/2)");
  bw_sub->add_option("--first-kind", ba.first_kind, "rise | fall")->capture_default_str();
  bw_sub->add_option("--edge-count", ba.edge_count, "Edges to analyse, 0 = all in the trace")->capture_default_str();
  bw_sub->add_option("--decay-budget", ba.decay_budget, "TAU_MEAS,T_BBR,T_RYDRYD, e.g. 12us,100us,100us");

  IngestArgs ia;
  auto* ingest_sub = app.add_subcommand("ingest", "Parse a measured file into canonical form");
  add_output_options(ingest_sub, ia.c, "ingested.csv");
  ingest_sub->add_option("--input", ia.input)->required();
  ingest_sub->add_option("--kind", ia.kind, "spectrum | time | snr")->capture_default_str();
  ingest_sub->add_option("--axis-column", ia.axis_column)->capture_default_str();
  ingest_sub->add_option("--value-column", ia.value_column)->capture_default_str();
  ingest_sub->add_option("--axis-units", ia.axis_units)->capture_default_str();
  ingest_sub->add_option("--value-units", ia.value_units);
  ingest_sub->add_option("--power-column", ia.snr.probe_power)->capture_default_str();
  ingest_sub->add_option("--field-column", ia.snr.lo_field)->capture_default_str();
  ingest_sub->add_option("--snr-column", ia.snr.snr)->capture_default_str();
  ingest_sub->add_option("--power-units", ia.snr.probe_power_units)->capture_default_str();
  ingest_sub->add_option("--field-units", ia.snr.lo_field_units)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << app.help();
    diagnostic(err, "usage", e.what());
    return usage_error;
  }

  Run run;
  const Common* common = nullptr;
  try {
    if (spectrum_sub->parsed()) {
      run.sub = spectrum_sub;
      common = &sa.c;
      spectrum(run, sa);
    } else if (map_sub->parsed()) {
      run.sub = map_sub;
      common = &ma.c;
      map_cmd(run, ma);
    } else if (cal_sub->parsed()) {
      run.sub = cal_sub;
      common = &ca.c;
      calibrate_cmd(run, ca);
    } else if (het_sub->parsed()) {
      run.sub = het_sub;
      common = &ha.c;
      heterodyne_cmd(run, ha, err);
    } else if (sens_sub->parsed()) {
      run.sub = sens_sub;
      common = &sea.c;
      sensitivity_cmd(run, sea, err);
    } else if (bw_sub->parsed()) {
      run.sub = bw_sub;
      common = &ba.c;
      bandwidth_cmd(run, ba);
    } else {
      run.sub = ingest_sub;
      common = &ia.c;
      ingest_cmd(run, ia, err);
    }
    write_manifest(run, *common);
    out << run.summary.dump() << "\n";
    return ok;
  } catch (const UsageError& e) {
    err << run.sub->help();
    diagnostic(err, "usage", e.what());
    return usage_error;
  } catch (const ParseError& e) {
    diagnostic(err, "parse", e.what(), &e);
    return parse_error;
  } catch (const Error& e) {
    diagnostic(err, to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::bad_variant_access&) {
    diagnostic(err, "internal", "trace kind mismatch");
    return internal_error;
  } catch (const std::exception& e) {
    diagnostic(err, "internal", e.what());
    return internal_error;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace rydelec::cli
