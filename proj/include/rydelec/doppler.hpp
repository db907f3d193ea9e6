#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace rydelec {

struct VelocityNode {
  double velocity = 0.0;  // m/s along the beam axis
  double weight = 0.0;
};

struct VelocityGrid {
  std::vector<VelocityNode> nodes;
  double sigma = 0.0;  // sqrt(kB T / m)
};

enum class Quadrature { trapezoid, gauss_hermite };

/// One-dimensional thermal velocity spread sqrt(kB T / m).
double thermal_sigma(double temperature, double mass);

/// Maxwell-Boltzmann quadrature. Trapezoid: `n_points` uniform nodes over +-span_sigmas sigma,
/// weights proportional to the Gaussian. Gauss-Hermite: the n-point rule for exp(-v^2/2 sigma^2),
/// `span_sigmas` unused. Weights always sum to 1; n_points == 1 gives the single node v = 0.
VelocityGrid make_grid(double temperature, double mass, std::size_t n_points, double span_sigmas,
                       Quadrature rule = Quadrature::trapezoid);

/// Weighted sum of per-node values in node order, compensated.
double doppler_average(std::span<const double> values, const VelocityGrid& grid);
double doppler_average(const std::function<double(double)>& f, const VelocityGrid& grid);

}  // namespace rydelec
