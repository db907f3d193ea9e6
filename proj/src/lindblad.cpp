#include "rydelec/lindblad.hpp"

#include <cmath>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

#include "rydelec/error.hpp"
#include "rydelec/units.hpp"

namespace rydelec {

namespace {

constexpr std::complex<double> I{0.0, 1.0};

inline Eigen::Index vec_index(std::size_t i, std::size_t j, std::size_t n) {
  return static_cast<Eigen::Index>(j * n + i);
}

}  // namespace

DensityMatrix::DensityMatrix(ComplexMatrix entries) : m_(std::move(entries)) {
  if (m_.rows() != m_.cols()) throw SolverError("density matrix must be square");
}

DensityMatrix DensityMatrix::pure(std::size_t dim, std::size_t level) {
  ComplexMatrix m = ComplexMatrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  m(static_cast<Eigen::Index>(level), static_cast<Eigen::Index>(level)) = 1.0;
  return DensityMatrix(std::move(m));
}

double DensityMatrix::hermiticity_error() const { return (m_ - m_.adjoint()).cwiseAbs().maxCoeff(); }

double DensityMatrix::min_eigenvalue() const {
  const ComplexMatrix h = 0.5 * (m_ + m_.adjoint());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

std::string DensityMatrix::check(const StateTolerance& tol) const {
  std::ostringstream out;
  if (!m_.allFinite()) return "non-finite entries";
  if (const double h = hermiticity_error(); h > tol.hermiticity) {
    out << "not Hermitian (max |rho - rho^dagger| = " << h << ")";
  } else if (const double t = std::abs(trace() - 1.0); t > tol.trace) {
    out << "trace differs from 1 by " << t;
  } else if (const double e = min_eigenvalue(); e < tol.eigenvalue_floor) {
    out << "negative eigenvalue " << e;
  }
  return out.str();
}

double trace_distance(const DensityMatrix& a, const DensityMatrix& b) {
  const ComplexMatrix d = a.matrix() - b.matrix();
  const ComplexMatrix h = 0.5 * (d + d.adjoint());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h, Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

ComplexMatrix Liouvillian::apply(const ComplexMatrix& rho) const {
  const auto n = static_cast<Eigen::Index>(dim);
  Eigen::Map<const ComplexVector> v(rho.data(), n * n);
  ComplexVector out = matrix * v;
  return Eigen::Map<ComplexMatrix>(out.data(), n, n);
}

double Liouvillian::trace_defect() const {
  const double scale = matrix.cwiseAbs().maxCoeff();
  if (!(scale > 0.0)) return 0.0;
  double worst = 0.0;
  for (Eigen::Index col = 0; col < matrix.cols(); ++col) {
    std::complex<double> sum = 0.0;
    for (std::size_t i = 0; i < dim; ++i) sum += matrix(vec_index(i, i, dim), col);
    worst = std::max(worst, std::abs(sum));
  }
  return worst / scale;
}

ComplexMatrix build_hamiltonian(const LadderScheme& scheme, double velocity) {
  const std::size_t n = scheme.dim();
  const auto paths = drive_paths(scheme);
  ComplexMatrix h = ComplexMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t level = 0; level < n; ++level) {
    double shift = 0.0;
    for (std::size_t d = 0; d < scheme.drives.size(); ++d) {
      const int step = paths[level][d];
      if (step == 0) continue;
      const auto& drive = scheme.drives[d];
      double effective = drive.detuning;
      if (drive.propagation_sign != 0) {
        effective -= drive.propagation_sign * units::two_pi / drive.wavelength * velocity;
      }
      shift += step * effective;
    }
    h(static_cast<Eigen::Index>(level), static_cast<Eigen::Index>(level)) = -shift;
  }
  for (const auto& drive : scheme.drives) {
    const auto l = static_cast<Eigen::Index>(drive.lower), u = static_cast<Eigen::Index>(drive.upper);
    h(l, u) += 0.5 * drive.rabi;
    h(u, l) += 0.5 * drive.rabi;
  }
  return h;
}

Liouvillian build_liouvillian(const ComplexMatrix& hamiltonian, const LadderScheme& scheme,
                              std::span<const IncoherentTransfer> extra) {
  const std::size_t n = scheme.dim();
  if (static_cast<std::size_t>(hamiltonian.rows()) != n || hamiltonian.cols() != hamiltonian.rows()) {
    throw SolverError("Hamiltonian dimension does not match the scheme");
  }
  const auto nn = static_cast<Eigen::Index>(n * n);
  Liouvillian L{n, ComplexMatrix::Zero(nn, nn)};
  auto& m = L.matrix;

  // -i [H, rho]
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const auto row = vec_index(i, j, n);
      for (std::size_t k = 0; k < n; ++k) {
        const auto hik = hamiltonian(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
        const auto hkj = hamiltonian(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
        if (hik != 0.0) m(row, vec_index(k, j, n)) += -I * hik;
        if (hkj != 0.0) m(row, vec_index(i, k, n)) += I * hkj;
      }
    }
  }

  // Jump |target><source| at `rate`. Losses are collected per level and applied once so the
  // population column sums cancel to rounding of the total.
  std::vector<double> loss(n, 0.0);
  auto add_jump = [&](std::size_t source, std::size_t target, double rate) {
    if (rate == 0.0) return;
    m(vec_index(target, target, n), vec_index(source, source, n)) += rate;
    loss[source] += rate;
  };

  for (std::size_t s = 0; s < n; ++s) {
    for (const auto& d : scheme.levels[s].decays) add_jump(s, d.target, d.rate);
    if (s != 0) add_jump(s, 0, scheme.transit_rate);
  }
  for (const auto& t : extra) {
    if (t.source >= n || t.target >= n || t.source == t.target) {
      throw ValidationError("incoherent transfer references an invalid level pair");
    }
    if (!(t.rate >= 0.0)) throw ValidationError("incoherent transfer rate must be >= 0");
    add_jump(t.source, t.target, t.rate);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double damping = 0.5 * (loss[i] + loss[j]);
      if (i != j) damping += scheme.levels[i].extra_dephasing + scheme.levels[j].extra_dephasing;
      m(vec_index(i, j, n), vec_index(i, j, n)) -= damping;
    }
  }
  return L;
}

DensityMatrix steady_state(const Liouvillian& L, const SteadyStateOptions& options) {
  const std::size_t n = L.dim;
  const auto nn = static_cast<Eigen::Index>(n * n);
  const double scale = L.matrix.cwiseAbs().maxCoeff();
  if (!(scale > 0.0) || !std::isfinite(scale)) throw SolverError("Liouvillian is zero or non-finite");
  const ComplexMatrix scaled = L.matrix / scale;

  if (options.check_uniqueness) {
    // Singular values of L are square roots of the eigenvalues of L^dagger L (ascending).
    const ComplexMatrix gram = scaled.adjoint() * scaled;
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(gram, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    const double largest = std::sqrt(std::max(ev(ev.size() - 1), 0.0));
    const double second = std::sqrt(std::max(ev.size() >= 2 ? ev(1) : largest * largest, 0.0));
    if (second < options.uniqueness_gap * largest) {
      std::ostringstream msg;
      msg << "degenerate steady state: null space dimension > 1 (second-smallest singular value "
          << second / largest << " of the largest)";
      throw SolverError(msg.str());
    }
  }

  ComplexMatrix a = scaled;
  ComplexVector b = ComplexVector::Zero(nn);
  a.row(0).setZero();
  for (std::size_t i = 0; i < n; ++i) a(0, vec_index(i, i, n)) = 1.0;
  b(0) = 1.0;
  ComplexVector x = a.partialPivLu().solve(b);
  if (!x.allFinite()) throw SolverError("steady-state solve produced non-finite values");

  const double residual = (L.matrix * x).norm();
  if (residual > 1e-9 * L.matrix.norm()) {
    std::ostringstream msg;
    msg << "steady-state residual " << residual << " exceeds 1e-9 ||L||";
    throw SolverError(msg.str());
  }

  ComplexMatrix rho = Eigen::Map<ComplexMatrix>(x.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  rho = 0.5 * (rho + rho.adjoint()).eval();
  rho /= rho.trace().real();
  return DensityMatrix(std::move(rho));
}

ComplexMatrix propagator(const Liouvillian& L, double dt) {
  if (dt == 0.0) return ComplexMatrix::Identity(L.matrix.rows(), L.matrix.cols());
  ComplexMatrix scaled = L.matrix * dt;
  return scaled.exp();
}

std::vector<DensityMatrix> time_evolve(const Liouvillian& L, const DensityMatrix& rho0,
                                       std::span<const double> times) {
  const std::size_t n = L.dim;
  if (rho0.dim() != n) throw SolverError("initial state dimension does not match the Liouvillian");
  std::vector<DensityMatrix> out;
  out.reserve(times.size());

  ComplexVector state = Eigen::Map<const ComplexVector>(rho0.matrix().data(), static_cast<Eigen::Index>(n * n));
  double t_prev = 0.0;
  // Uniform grids hit the same dt repeatedly; keep the most recent propagators.
  std::vector<std::pair<double, ComplexMatrix>> cache;

  for (const double t : times) {
    if (!(t >= t_prev) || !std::isfinite(t)) {
      std::ostringstream msg;
      msg << "times must be finite, non-negative and non-decreasing (interval [" << t_prev << ", " << t << "])";
      throw SolverError(msg.str());
    }
    const double dt = t - t_prev;
    if (dt > 0.0) {
      const ComplexMatrix* p = nullptr;
      for (const auto& [key, value] : cache) {
        if (key == dt) p = &value;
      }
      if (!p) {
        if (cache.size() >= 4) cache.erase(cache.begin());
        cache.emplace_back(dt, propagator(L, dt));
        p = &cache.back().second;
      }
      state = (*p) * state;
      if (!state.allFinite()) {
        std::ostringstream msg;
        msg << "propagation failed on interval [" << t_prev << ", " << t << "] s";
        throw SolverError(msg.str());
      }
      // exp(L dt) keeps rho Hermitian with unit trace; for ||L|| dt ~ 1e7 the squaring steps
      // leave ~1e-10 drift, which is projected out here.
      Eigen::Map<ComplexMatrix> rho(state.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
      const ComplexMatrix h = 0.5 * (rho + rho.adjoint());
      rho = h / h.trace().real();
    }
    out.emplace_back(ComplexMatrix(
        Eigen::Map<ComplexMatrix>(state.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))));
    t_prev = t;
  }
  return out;
}

}  // namespace rydelec
