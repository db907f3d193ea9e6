#include "rydelec/dynamics.hpp"

#include <algorithm>
#include <cmath>

#include "rydelec/error.hpp"
#include "rydelec/lindblad.hpp"
#include "rydelec/parallel.hpp"
#include "rydelec/units.hpp"

namespace rydelec {

void TimeTrace::validate() const {
  if (times.size() != values.size()) throw ValidationError("time trace times and values differ in length");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) {
      throw ValidationError("time trace times are not strictly increasing at index " + std::to_string(i));
    }
  }
}

std::vector<Edge> square_wave_edges(double first, double period, std::size_t count, bool first_on) {
  std::vector<Edge> edges(count);
  for (std::size_t i = 0; i < count; ++i) {
    edges[i].time = first + 0.5 * period * static_cast<double>(i);
    edges[i].on = (i % 2 == 0) == first_on;
  }
  return edges;
}

SquareWaveResult simulate_square_wave(const LadderScheme& scheme, double rf_on_field, double period,
                                      std::size_t samples, const VelocityGrid& grid,
                                      const SquareWaveOptions& options) {
  if (!(period > 0.0)) throw ValidationError("square-wave period must be > 0");
  if (samples < 4 || samples % 2 != 0) throw ValidationError("samples per period must be even and >= 4");
  if (!(rf_on_field >= 0.0)) throw ValidationError("RF on field must be >= 0");
  if (options.record_cycles == 0) throw ValidationError("record at least one cycle");
  const auto rf = scheme.rf_drive_index();
  if (!rf) throw ValidationError("square-wave simulation needs an RF drive");

  LadderScheme on = scheme, off = scheme;
  on.drives[*rf].set_field(rf_on_field);
  off.drives[*rf].set_field(0.0);

  const std::size_t n = scheme.dim();
  const auto nn = static_cast<Eigen::Index>(n * n);
  const std::size_t half = samples / 2;
  const double dt = period / static_cast<double>(samples);
  const std::size_t points = options.record_cycles * samples + half + 1;
  const std::size_t nodes = grid.nodes.size();

  std::vector<std::vector<DensityMatrix>> recorded(nodes);
  std::vector<std::size_t> cycles(nodes, 0);

  parallel_for(nodes, options.signal.threads, [&](std::size_t k) {
    const double v = grid.nodes[k].velocity;
    const auto l_on = build_liouvillian(build_hamiltonian(on, v), on, options.signal.transfers);
    const auto l_off = build_liouvillian(build_hamiltonian(off, v), off, options.signal.transfers);
    const DensityMatrix start = steady_state(l_off);
    ComplexVector x = Eigen::Map<const ComplexVector>(start.matrix().data(), nn);

    const ComplexMatrix cycle = propagator(l_off, 0.5 * period) * propagator(l_on, 0.5 * period);
    std::size_t c = 0;
    for (;;) {
      ComplexVector next = cycle * x;
      const double change = (next - x).cwiseAbs().maxCoeff();
      x = std::move(next);
      ++c;
      if (!x.allFinite()) throw SolverError("square-wave propagation produced non-finite values");
      if (change <= options.tolerance) break;
      if (c >= options.max_cycles) {
        throw SolverError("square-wave response not periodic after " + std::to_string(c) + " cycles (velocity " +
                          units::format_number(v) + " m/s)");
      }
    }
    cycles[k] = c;

    // Record from the start of an off half: the periodic state there is exp(L_on T/2) x.
    const ComplexMatrix step_on = propagator(l_on, dt);
    const ComplexMatrix step_off = propagator(l_off, dt);
    x = propagator(l_on, 0.5 * period) * x;
    auto& out = recorded[k];
    out.reserve(points);
    const auto dim = static_cast<Eigen::Index>(n);
    out.emplace_back(ComplexMatrix(Eigen::Map<ComplexMatrix>(x.data(), dim, dim)));
    for (std::size_t i = 0; i + 1 < points; ++i) {
      x = ((i % samples) < half ? step_off : step_on) * x;
      out.emplace_back(ComplexMatrix(Eigen::Map<ComplexMatrix>(x.data(), dim, dim)));
    }
  });

  SquareWaveResult result;
  result.cycles = *std::max_element(cycles.begin(), cycles.end());
  result.trace.units = channel_units(options.signal.channel);
  result.trace.times.resize(points);
  result.trace.values.resize(points);
  std::vector<DensityMatrix> per_node(nodes);
  for (std::size_t i = 0; i < points; ++i) {
    for (std::size_t k = 0; k < nodes; ++k) per_node[k] = recorded[k][i];
    result.trace.times[i] = dt * static_cast<double>(i);
    result.trace.values[i] =
        channel_signal(average_states(per_node, grid), scheme, options.signal.channel, options.signal.fluorescence);
  }
  result.edges = square_wave_edges(0.5 * period, period, 2 * options.record_cycles, true);
  return result;
}

namespace {

struct Stats {
  double mean = 0.0, std = 0.0;
};

Stats stats(const std::vector<double>& v) {
  Stats s;
  if (v.empty()) return s;
  CompensatedSum sum;
  for (const double x : v) sum.add(x);
  s.mean = sum.value() / static_cast<double>(v.size());
  if (v.size() > 1) {
    CompensatedSum ss;
    for (const double x : v) ss.add((x - s.mean) * (x - s.mean));
    s.std = std::sqrt(ss.value() / static_cast<double>(v.size() - 1));
  }
  return s;
}

// Mean of the last tenth (at least one sample) of [first, last).
double plateau(const std::vector<double>& values, std::size_t first, std::size_t last) {
  const std::size_t count = std::max<std::size_t>(1, (last - first) / 10);
  CompensatedSum sum;
  for (std::size_t i = last - count; i < last; ++i) sum.add(values[i]);
  return sum.value() / static_cast<double>(count);
}

std::string describe(std::size_t index, const Edge& e) {
  return std::string(e.on ? "rise" : "fall") + " edge " + std::to_string(index) + " at t = " +
         units::format_number(e.time) + " s";
}

}  // namespace

RiseFall extract_rise_fall(const TimeTrace& trace, std::span<const Edge> edges) {
  trace.validate();
  if (edges.empty()) throw AnalysisError("no edges given");
  const auto& t = trace.times;
  const auto& y = trace.values;
  for (std::size_t e = 1; e < edges.size(); ++e) {
    if (!(edges[e].time > edges[e - 1].time)) throw AnalysisError("edges must be strictly increasing in time");
  }
  // First sample at or after a time, forgiving rounding in the edge times.
  const double slack = t.size() > 1 ? 1e-6 * (t[1] - t[0]) : 0.0;
  auto index_at = [&](double time) {
    return static_cast<std::size_t>(std::lower_bound(t.begin(), t.end(), time - slack) - t.begin());
  };

  double scale = 0.0;
  for (const double v : y) scale = std::max(scale, std::abs(v));

  RiseFall result;
  std::vector<double> rises, falls;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const Edge& edge = edges[e];
    const std::size_t seg_begin = e == 0 ? 0 : index_at(edges[e - 1].time);
    const std::size_t at = index_at(edge.time);
    const std::size_t seg_end = e + 1 < edges.size() ? index_at(edges[e + 1].time) : t.size();
    if (at <= seg_begin || at >= t.size() || seg_end <= at + 1) {
      throw AnalysisError(describe(e, edge) + ": not enough samples on both sides");
    }
    // The sample at the edge belongs to the level before it.
    const double before = plateau(y, seg_begin, at + 1);
    const double after = plateau(y, at + 1, seg_end);
    const double amplitude = after - before;
    // Steps at rounding level (a flat trace) are not edges.
    if (!std::isfinite(amplitude) || std::abs(amplitude) <= 1e-12 * scale) {
      throw AnalysisError(describe(e, edge) + ": zero amplitude");
    }
    const double dir = amplitude > 0.0 ? 1.0 : -1.0;

    auto crossing = [&](double fraction) {
      const double level = before + fraction * amplitude;
      for (std::size_t i = at + 1; i < seg_end; ++i) {
        if (dir * (y[i] - level) >= 0.0) {
          const double y0 = y[i - 1], y1 = y[i];
          const double f = y1 == y0 ? 1.0 : std::clamp((level - y0) / (y1 - y0), 0.0, 1.0);
          return t[i - 1] + f * (t[i] - t[i - 1]);
        }
      }
      throw AnalysisError(describe(e, edge) + ": missing " + std::to_string(static_cast<int>(fraction * 100)) +
                          "% crossing");
    };
    const double t10 = crossing(0.1);
    const double t90 = crossing(0.9);
    const double tau = t90 - t10;
    result.edges.push_back({edge, tau, amplitude});
    (edge.on ? rises : falls).push_back(tau);
  }
  const auto r = stats(rises);
  const auto f = stats(falls);
  result.tau_rise = r.mean;
  result.tau_rise_std = r.std;
  result.tau_fall = f.mean;
  result.tau_fall_std = f.std;
  return result;
}

double bandwidth_from_tau(double tau) {
  if (!(tau > 0.0)) throw AnalysisError("rise/fall time must be > 0");
  return 0.35 / tau;
}

DecayBudget decay_decomposition(double tau_meas, double t_bbr, double t_rydryd) {
  if (!(tau_meas > 0.0 && t_bbr > 0.0 && t_rydryd > 0.0)) throw ValidationError("decay times must be > 0");
  DecayBudget b{tau_meas, t_bbr, t_rydryd, 0.0, false};
  b.gamma_col = 1.0 / tau_meas - (1.0 / t_bbr + 1.0 / t_rydryd);
  b.negative = b.gamma_col < 0.0;
  return b;
}

}  // namespace rydelec
