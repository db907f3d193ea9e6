#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rydelec/atomscheme.hpp"

namespace rydelec {

using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

/// Tolerances a physical state must meet.
struct StateTolerance {
  double hermiticity = 1e-10;
  double trace = 1e-9;
  double eigenvalue_floor = -1e-9;
};

class DensityMatrix {
 public:
  DensityMatrix() = default;
  explicit DensityMatrix(ComplexMatrix entries);

  /// All population in `level`.
  static DensityMatrix pure(std::size_t dim, std::size_t level);

  std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }
  const ComplexMatrix& matrix() const { return m_; }
  std::complex<double> operator()(std::size_t i, std::size_t j) const { return m_(i, j); }
  double population(std::size_t i) const { return m_(i, i).real(); }

  std::complex<double> trace() const { return m_.trace(); }
  /// max |rho - rho^dagger|
  double hermiticity_error() const;
  /// Smallest eigenvalue of the Hermitian part.
  double min_eigenvalue() const;
  /// Describes the first violated tolerance, empty when the state is valid.
  std::string check(const StateTolerance& tol = {}) const;

 private:
  ComplexMatrix m_;
};

/// Trace distance 1/2 ||a - b||_1.
double trace_distance(const DensityMatrix& a, const DensityMatrix& b);

/// Superoperator acting on column-stacked rho: vec(rho)[j*N + i] = rho(i, j).
struct Liouvillian {
  std::size_t dim = 0;
  ComplexMatrix matrix;

  ComplexMatrix apply(const ComplexMatrix& rho) const;
  /// max_k |sum_i L(ii, k)| relative to the largest entry: how far d/dt Tr(rho) is from zero.
  double trace_defect() const;
};

/// Incoherent population transfer source -> target at `rate` (rad/s).
struct IncoherentTransfer {
  std::size_t source = 0;
  std::size_t target = 0;
  double rate = 0.0;
};

/// Rotating-wave Hamiltonian in rad/s for an atom moving at `velocity` along the beam axis.
/// H(l, l) = -sum over the path to l of (detuning - sign * k * v); drive couplings are Omega/2.
ComplexMatrix build_hamiltonian(const LadderScheme& scheme, double velocity);

/// d rho/dt = -i[H, rho] + decays + transit relaxation + dephasing + extra incoherent transfers.
Liouvillian build_liouvillian(const ComplexMatrix& hamiltonian, const LadderScheme& scheme,
                              std::span<const IncoherentTransfer> extra = {});

struct SteadyStateOptions {
  /// Reject when the second-smallest singular value of L is below this fraction of the largest.
  double uniqueness_gap = 1e-6;
  bool check_uniqueness = true;
};

/// Solves L rho = 0 with Tr rho = 1. Throws SolverError on a degenerate null space or when the
/// residual exceeds 1e-9 ||L||.
DensityMatrix steady_state(const Liouvillian& L, const SteadyStateOptions& options = {});

/// Exact propagator exp(L dt).
ComplexMatrix propagator(const Liouvillian& L, double dt);

/// State at each requested time (seconds, non-decreasing, >= 0); rho0 is the state at t = 0.
/// Uses the matrix exponential on each interval, then removes round-off drift from Hermiticity
/// and trace. Throws SolverError naming the interval when the
/// propagation produces non-finite entries.
std::vector<DensityMatrix> time_evolve(const Liouvillian& L, const DensityMatrix& rho0,
                                       std::span<const double> times);

}  // namespace rydelec
