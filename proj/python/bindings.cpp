#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "rydelec/atomscheme.hpp"
#include "rydelec/calibrate.hpp"
#include "rydelec/cli.hpp"
#include "rydelec/doppler.hpp"
#include "rydelec/dynamics.hpp"
#include "rydelec/error.hpp"
#include "rydelec/ingest.hpp"
#include "rydelec/lindblad.hpp"
#include "rydelec/observables.hpp"

namespace py = pybind11;
using namespace rydelec;

namespace {

VelocityGrid grid_for(const LadderScheme& s, std::size_t points, double span, const std::string& quadrature) {
  const auto rule = quadrature == "gauss-hermite" ? Quadrature::gauss_hermite : Quadrature::trapezoid;
  if (quadrature != "trapezoid" && quadrature != "gauss-hermite") {
    throw ValidationError("quadrature must be trapezoid or gauss-hermite");
  }
  return make_grid(s.temperature, s.atom_mass, points, span, rule);
}

SignalOptions signal_for(const std::string& channel, unsigned threads) {
  SignalOptions o;
  o.channel = parse_channel(channel);
  o.threads = threads;
  return o;
}

py::dict peak_dict(const Peak& p) {
  py::dict d;
  d["center"] = p.center;
  d["height"] = p.height;
  d["prominence"] = p.prominence;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Rydberg-atom RF electrometry toolkit";
  m.attr("__version__") = RYDELEC_VERSION;

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<UsageError>(m, "UsageError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<SolverError>(m, "SolverError", base.ptr());
  py::register_exception<AnalysisError>(m, "AnalysisError", base.ptr());

  py::class_<LadderScheme>(m, "Scheme")
      .def_property_readonly("dim", &LadderScheme::dim)
      .def_readwrite("name", &LadderScheme::name)
      .def_readwrite("temperature", &LadderScheme::temperature)
      .def_readwrite("number_density", &LadderScheme::number_density)
      .def_readwrite("cell_length", &LadderScheme::cell_length)
      .def_readwrite("transit_rate", &LadderScheme::transit_rate)
      .def_property_readonly("levels",
                             [](const LadderScheme& s) {
                               std::vector<std::string> out;
                               for (const auto& l : s.levels) out.push_back(l.label);
                               return out;
                             })
      .def_property_readonly("drives",
                             [](const LadderScheme& s) {
                               std::vector<std::string> out;
                               for (const auto& d : s.drives) out.push_back(d.name);
                               return out;
                             })
      .def(
          "set",
          [](LadderScheme& s, const std::string& knob, double value) {
            SweepParameter::parse(s, knob).apply(s, value);
            validate(s);
          },
          py::arg("knob"), py::arg("value"),
          "Set a knob such as 'rf-field' (V/m), 'probe-power' (W), 'coupling-detuning' (rad/s).")
      .def("rabi", [](const LadderScheme& s, const std::string& drive) { return s.drives[s.drive_index(drive)].rabi; })
      .def("to_json", [](const LadderScheme& s) { return serialize_scheme(s); })
      .def("copy", [](const LadderScheme& s) { return s; })
      .def("__eq__", [](const LadderScheme& a, const LadderScheme& b) { return a == b; });

  m.def("default_scheme", &default_scheme);
  m.def("load_scheme", [](const std::string& text) { return load_scheme(text); }, py::arg("text"));
  m.def("rabi_from_field", &rabi_from_field, py::arg("field"), py::arg("dipole_moment"));

  m.def(
      "steady_state",
      [](const LadderScheme& s, double velocity) {
        return steady_state(build_liouvillian(build_hamiltonian(s, velocity), s)).matrix();
      },
      py::arg("scheme"), py::arg("velocity") = 0.0, "Steady-state density matrix for one velocity class.");

  m.def(
      "averaged_state",
      [](const LadderScheme& s, std::size_t doppler_points, unsigned threads) {
        return averaged_steady_state(s, grid_for(s, doppler_points, 4.0, "trapezoid"), {}, threads).matrix();
      },
      py::arg("scheme"), py::arg("doppler_points") = 201, py::arg("threads") = 0);

  m.def(
      "evolve",
      [](const LadderScheme& s, const std::vector<double>& times, double velocity) {
        const auto L = build_liouvillian(build_hamiltonian(s, velocity), s);
        std::vector<ComplexMatrix> out;
        for (const auto& rho : time_evolve(L, DensityMatrix::pure(s.dim(), 0), times)) out.push_back(rho.matrix());
        return out;
      },
      py::arg("scheme"), py::arg("times"), py::arg("velocity") = 0.0, "States at `times`, starting in level 0.");

  m.def(
      "signal",
      [](const LadderScheme& s, const std::string& channel, std::size_t doppler_points, unsigned threads) {
        return evaluate_signal(s, grid_for(s, doppler_points, 4.0, "trapezoid"), signal_for(channel, threads));
      },
      py::arg("scheme"), py::arg("channel") = "transmission", py::arg("doppler_points") = 201, py::arg("threads") = 0);

  m.def(
      "sweep",
      [](const LadderScheme& s, const std::string& knob, const std::vector<double>& values, const std::string& channel,
         std::size_t doppler_points, double doppler_span, const std::string& quadrature, unsigned threads) {
        const auto t = sweep(s, SweepParameter::parse(s, knob), values, grid_for(s, doppler_points, doppler_span, quadrature),
                             signal_for(channel, threads));
        return py::make_tuple(t.axis, t.values);
      },
      py::arg("scheme"), py::arg("knob"), py::arg("values"), py::arg("channel") = "transmission",
      py::arg("doppler_points") = 201, py::arg("doppler_span") = 4.0, py::arg("quadrature") = "trapezoid",
      py::arg("threads") = 0, "Returns (axis, values); detuning and Rabi knobs are in rad/s.");

  m.def(
      "at_splitting",
      [](const std::vector<double>& axis, const std::vector<double>& values, const std::string& axis_units,
         double hz_per_axis_unit) {
        const SpectrumTrace t{"axis", axis_units, axis, values, ""};
        const auto r = extract_at_splitting(t, {}, hz_per_axis_unit);
        py::dict d;
        d["splitting"] = r.splitting;
        d["split"] = r.split;
        py::list peaks;
        for (const auto& p : r.peaks) peaks.append(peak_dict(p));
        d["peaks"] = peaks;
        return d;
      },
      py::arg("axis"), py::arg("values"), py::arg("axis_units") = "Hz", py::arg("hz_per_axis_unit") = 1.0,
      "Autler-Townes splitting in Hz.");

  m.def(
      "fit_field_calibration",
      [](const std::vector<std::pair<double, double>>& points, double dipole) {
        std::vector<CalibrationPoint> p;
        for (const auto& [dbm, hz] : points) p.push_back({dbm, hz});
        const auto f = fit_field_calibration(p, dipole);
        py::dict d;
        d["c_cal"] = f.c_cal;
        d["slope"] = f.slope;
        d["residual_rms"] = f.residual_rms;
        return d;
      },
      py::arg("points"), py::arg("dipole_moment"), "points: [(power_dbm, splitting_hz), ...]");

  m.def(
      "sensitivity_from_snr",
      [](double p_sig_dbm, double snr_db, double rbw, double c_cal) {
        return sensitivity_from_snr(p_sig_dbm, snr_db, rbw, CalibrationFit{c_cal, 0.0, 0.0, {}});
      },
      py::arg("p_sig_dbm"), py::arg("snr_db"), py::arg("rbw"), py::arg("c_cal"));
  m.def(
      "c_cal_from_anchor", [](double dbm, double field) { return calibration_from_anchor(dbm, field).c_cal; },
      py::arg("power_dbm"), py::arg("field"));
  m.def("default_noise_floor", [](const std::string& channel) { return default_noise_floor(parse_channel(channel)); });

  m.def(
      "heterodyne",
      [](const LadderScheme& s, double lo_field, double sig_field, double beat, double rbw, double noise_floor,
         const std::string& channel, std::size_t doppler_points, unsigned threads) {
        HeterodyneOptions o;
        o.signal = signal_for(channel, threads);
        const auto r = simulate_heterodyne(s, {lo_field, sig_field, beat, rbw, noise_floor},
                                           grid_for(s, doppler_points, 4.0, "trapezoid"), o);
        py::dict d;
        d["beat_amplitude"] = r.beat_amplitude;
        d["slope"] = r.slope;
        d["snr_db"] = r.snr_db;
        d["zero_slope"] = r.zero_slope;
        d["warnings"] = r.warnings;
        return d;
      },
      py::arg("scheme"), py::arg("lo_field"), py::arg("sig_field") = 70e-6, py::arg("beat") = 1e3, py::arg("rbw") = 1.0,
      py::arg("noise_floor") = 0.0, py::arg("channel") = "transmission", py::arg("doppler_points") = 201,
      py::arg("threads") = 0);

  m.def(
      "square_wave",
      [](const LadderScheme& s, double rf_on_field, double period, std::size_t samples, const std::string& channel,
         std::size_t doppler_points, unsigned threads) {
        SquareWaveOptions o;
        o.signal = signal_for(channel, threads);
        const auto r = simulate_square_wave(s, rf_on_field, period, samples, grid_for(s, doppler_points, 4.0, "trapezoid"), o);
        std::vector<std::pair<double, bool>> edges;
        for (const auto& e : r.edges) edges.emplace_back(e.time, e.on);
        return py::make_tuple(r.trace.times, r.trace.values, edges);
      },
      py::arg("scheme"), py::arg("rf_on_field"), py::arg("period"), py::arg("samples") = 2000,
      py::arg("channel") = "transmission", py::arg("doppler_points") = 41, py::arg("threads") = 0,
      "Returns (times, values, edges) with edges as (time, rf_on).");

  m.def(
      "rise_fall",
      [](const std::vector<double>& times, const std::vector<double>& values,
         const std::vector<std::pair<double, bool>>& edges) {
        std::vector<Edge> e;
        for (const auto& [t, on] : edges) e.push_back({t, on});
        const auto r = extract_rise_fall(TimeTrace{times, values, ""}, e);
        py::dict d;
        d["tau_rise"] = r.tau_rise;
        d["tau_rise_std"] = r.tau_rise_std;
        d["tau_fall"] = r.tau_fall;
        d["tau_fall_std"] = r.tau_fall_std;
        return d;
      },
      py::arg("times"), py::arg("values"), py::arg("edges"));
  m.def("bandwidth_from_tau", &bandwidth_from_tau, py::arg("tau"));
  m.def(
      "decay_decomposition",
      [](double tau_meas, double t_bbr, double t_rydryd) {
        const auto b = decay_decomposition(tau_meas, t_bbr, t_rydryd);
        return py::make_tuple(b.gamma_col, b.negative);
      },
      py::arg("tau_meas"), py::arg("t_bbr"), py::arg("t_rydryd"), "Returns (gamma_col in 1/s, negative flag).");

  m.def(
      "read_table",
      [](const std::string& text) {
        const auto raw = parse_raw(text);
        py::dict d;
        d["columns"] = raw.columns;
        d["rows"] = raw.rows;
        d["metadata"] = raw.metadata;
        return d;
      },
      py::arg("text"));

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "rydelec");
        std::ostringstream out, err;
        const int code = cli::run(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one command line in-process; returns (exit_code, stdout, stderr).");
}
