#include "rydelec/observables.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rydelec/error.hpp"
#include "rydelec/parallel.hpp"
#include "rydelec/units.hpp"

namespace rydelec {

void SpectrumTrace::validate() const {
  if (axis.size() != values.size()) throw ValidationError("trace axis and values differ in length");
  if (axis.size() < 2) return;
  const bool increasing = axis[1] > axis[0];
  for (std::size_t i = 1; i < axis.size(); ++i) {
    const bool ok = increasing ? axis[i] > axis[i - 1] : axis[i] < axis[i - 1];
    if (!ok) throw ValidationError("trace axis is not strictly monotone at index " + std::to_string(i));
  }
}

Channel parse_channel(std::string_view name) {
  if (name == "transmission" || name == "eit" || name == "eia") return Channel::transmission;
  if (name == "fluorescence") return Channel::fluorescence;
  throw ValidationError("unknown channel '" + std::string(name) + "' (transmission | fluorescence)");
}

const char* to_string(Channel channel) {
  return channel == Channel::transmission ? "transmission" : "fluorescence";
}

const char* channel_units(Channel channel) {
  return channel == Channel::transmission ? "1" : "counts/s";
}

double absorption_coefficient(const DensityMatrix& rho, const LadderScheme& scheme) {
  const Drive& probe = scheme.probe();
  if (!(probe.rabi > 0.0)) throw ValidationError("probe transmission needs a probe Rabi rate > 0");
  if (!(probe.wavelength > 0.0)) throw ValidationError("probe transmission needs the probe wavelength");
  const double k = units::two_pi / probe.wavelength;
  const double d2 = probe.dipole_moment * probe.dipole_moment;
  const double coherence = rho(probe.lower, probe.upper).imag();
  return 2.0 * k * scheme.number_density * d2 / (units::epsilon0 * units::hbar * probe.rabi) * coherence;
}

double probe_transmission(const DensityMatrix& rho, const LadderScheme& scheme) {
  if (scheme.number_density == 0.0 || scheme.cell_length == 0.0) return 1.0;
  return std::exp(-absorption_coefficient(rho, scheme) * scheme.cell_length);
}

double interrogated_atoms(const LadderScheme& scheme) {
  return scheme.number_density * std::numbers::pi * scheme.interaction_radius * scheme.interaction_radius *
         scheme.cell_length;
}

double fluorescence_rate(const DensityMatrix& rho, const LadderScheme& scheme, const FluorescenceConfig& cfg) {
  if (!(cfg.collection_efficiency >= 0.0 && cfg.collection_efficiency <= 1.0)) {
    throw ValidationError("collection efficiency must lie in [0, 1]");
  }
  std::vector<std::size_t> sources = cfg.source_levels;
  if (sources.empty()) {
    for (std::size_t i = 0; i < scheme.dim(); ++i) sources.push_back(i);
  }
  const double lo = cfg.band_center - 0.5 * cfg.band_fwhm;
  const double hi = cfg.band_center + 0.5 * cfg.band_fwhm;
  CompensatedSum rate;
  for (const std::size_t s : sources) {
    if (s >= scheme.dim()) throw ValidationError("fluorescence source level " + std::to_string(s) + " does not exist");
    const double pop = std::max(0.0, rho.population(s));
    for (const auto& d : scheme.levels[s].decays) {
      if (d.photon_wavelength >= lo && d.photon_wavelength <= hi && d.photon_wavelength > 0.0) rate.add(d.rate * pop);
    }
  }
  return rate.value() * interrogated_atoms(scheme) * cfg.collection_efficiency;
}

double channel_signal(const DensityMatrix& rho, const LadderScheme& scheme, Channel channel,
                      const FluorescenceConfig& cfg) {
  return channel == Channel::transmission ? probe_transmission(rho, scheme)
                                          : fluorescence_rate(rho, scheme, cfg) * cfg.detector_gain;
}

DensityMatrix average_states(std::span<const DensityMatrix> states, const VelocityGrid& grid) {
  if (states.size() != grid.nodes.size() || states.empty()) {
    throw ValidationError("one state per velocity node required");
  }
  const auto n = static_cast<Eigen::Index>(states.front().dim());
  ComplexMatrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      CompensatedSum re, im;
      for (std::size_t k = 0; k < states.size(); ++k) {
        const auto z = states[k].matrix()(i, j);
        re.add(grid.nodes[k].weight * z.real());
        im.add(grid.nodes[k].weight * z.imag());
      }
      out(i, j) = {re.value(), im.value()};
    }
  }
  return DensityMatrix(std::move(out));
}

namespace {

DensityMatrix solve_node(const LadderScheme& scheme, double velocity, std::span<const IncoherentTransfer> transfers) {
  return steady_state(build_liouvillian(build_hamiltonian(scheme, velocity), scheme, transfers));
}

}  // namespace

DensityMatrix averaged_steady_state(const LadderScheme& scheme, const VelocityGrid& grid,
                                    std::span<const IncoherentTransfer> transfers, unsigned threads) {
  std::vector<DensityMatrix> states(grid.nodes.size());
  parallel_for(states.size(), threads,
               [&](std::size_t k) { states[k] = solve_node(scheme, grid.nodes[k].velocity, transfers); });
  return average_states(states, grid);
}

std::vector<double> evaluate_signals(std::span<const LadderScheme> schemes, const VelocityGrid& grid,
                                     const SignalOptions& options) {
  const std::size_t nodes = grid.nodes.size();
  std::vector<double> out(schemes.size());
  // Bounded memory: a block of schemes at a time, every (scheme, node) solve is one task.
  constexpr std::size_t block = 64;
  std::vector<DensityMatrix> states;
  for (std::size_t first = 0; first < schemes.size(); first += block) {
    const std::size_t count = std::min(block, schemes.size() - first);
    states.assign(count * nodes, DensityMatrix{});
    parallel_for(count * nodes, options.threads, [&](std::size_t task) {
      const std::size_t s = first + task / nodes;
      const std::size_t k = task % nodes;
      try {
        states[task] = solve_node(schemes[s], grid.nodes[k].velocity, options.transfers);
      } catch (const SolverError& e) {
        throw SolverError("grid point " + std::to_string(s) + ", velocity " +
                          units::format_number(grid.nodes[k].velocity) + " m/s: " + e.what());
      }
    });
    for (std::size_t i = 0; i < count; ++i) {
      const auto avg = average_states(std::span(states).subspan(i * nodes, nodes), grid);
      out[first + i] = channel_signal(avg, schemes[first + i], options.channel, options.fluorescence);
    }
  }
  return out;
}

double evaluate_signal(const LadderScheme& scheme, const VelocityGrid& grid, const SignalOptions& options) {
  return evaluate_signals(std::span(&scheme, 1), grid, options).front();
}

SweepParameter SweepParameter::parse(const LadderScheme& scheme, std::string_view name) {
  const auto dash = name.rfind('-');
  if (dash == std::string_view::npos || dash == 0) {
    throw ValidationError("sweep parameter '" + std::string(name) + "' must look like <drive>-<detuning|rabi|field|power>");
  }
  const auto drive_name = name.substr(0, dash);
  const auto knob = name.substr(dash + 1);
  SweepParameter p;
  p.name = std::string(name);
  if (drive_name == "rf" && !scheme.rf_drive_index()) throw ValidationError("scheme has no RF drive");
  p.drive = drive_name == "rf" ? *scheme.rf_drive_index()
            : drive_name == "probe" ? scheme.probe_index()
                                    : scheme.drive_index(drive_name);
  const Drive& d = scheme.drives[p.drive];
  if (knob == "detuning") {
    p.kind = Kind::detuning;
  } else if (knob == "rabi") {
    p.kind = Kind::rabi;
  } else if (knob == "field") {
    p.kind = Kind::field;
    if (!(d.dipole_moment > 0.0)) throw ValidationError("drive '" + d.name + "' has no dipole moment for a field sweep");
  } else if (knob == "power") {
    p.kind = Kind::power;
    if (!d.beam) throw ValidationError("drive '" + d.name + "' has no beam for a power sweep");
  } else {
    throw ValidationError("unknown sweep knob '" + std::string(knob) + "' (detuning | rabi | field | power)");
  }
  return p;
}

void SweepParameter::apply(LadderScheme& scheme, double value) const {
  Drive& d = scheme.drives.at(drive);
  switch (kind) {
    case Kind::detuning: d.detuning = value; break;
    case Kind::rabi: d.set_rabi(value); break;
    case Kind::field: d.set_field(value); break;
    case Kind::power: d.set_beam_power(value); break;
  }
}

const char* SweepParameter::units() const {
  switch (kind) {
    case Kind::detuning:
    case Kind::rabi: return "rad/s";
    case Kind::field: return "V/m";
    case Kind::power: return "W";
  }
  return "";
}

SpectrumTrace sweep(const LadderScheme& scheme, const SweepParameter& parameter, std::span<const double> values,
                    const VelocityGrid& grid, const SignalOptions& options) {
  if (values.empty()) throw ValidationError("sweep grid is empty");
  std::vector<LadderScheme> schemes(values.size(), scheme);
  for (std::size_t i = 0; i < values.size(); ++i) parameter.apply(schemes[i], values[i]);

  SpectrumTrace trace;
  trace.axis_name = parameter.name;
  trace.axis_units = parameter.units();
  trace.axis.assign(values.begin(), values.end());
  trace.units = channel_units(options.channel);
  try {
    trace.values = evaluate_signals(schemes, grid, options);
  } catch (const SolverError& e) {
    throw SolverError("sweep of " + parameter.name + ": " + e.what());
  }
  trace.validate();
  return trace;
}

SignalMap signal_map(const LadderScheme& scheme, const SweepParameter& x_param, std::span<const double> x_values,
                     const SweepParameter& y_param, std::span<const double> y_values, const VelocityGrid& grid,
                     const SignalOptions& options) {
  if (x_values.empty() || y_values.empty()) throw ValidationError("map grid is empty");
  std::vector<LadderScheme> schemes;
  schemes.reserve(x_values.size() * y_values.size());
  for (const double y : y_values) {
    for (const double x : x_values) {
      LadderScheme s = scheme;
      y_param.apply(s, y);
      x_param.apply(s, x);
      schemes.push_back(std::move(s));
    }
  }
  SignalMap map;
  map.x_name = x_param.name;
  map.y_name = y_param.name;
  map.x_units = x_param.units();
  map.y_units = y_param.units();
  map.units = channel_units(options.channel);
  map.x.assign(x_values.begin(), x_values.end());
  map.y.assign(y_values.begin(), y_values.end());
  map.values = evaluate_signals(schemes, grid, options);
  return map;
}

std::vector<double> linspace(double first, double last, std::size_t count) {
  if (count == 0) return {};
  if (count == 1) return {first};
  std::vector<double> out(count);
  const double step = (last - first) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) out[i] = first + step * static_cast<double>(i);
  out.back() = last;
  return out;
}

}  // namespace rydelec
