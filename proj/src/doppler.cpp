#include "rydelec/doppler.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "rydelec/error.hpp"
#include "rydelec/parallel.hpp"
#include "rydelec/units.hpp"

namespace rydelec {

double thermal_sigma(double temperature, double mass) {
  return std::sqrt(units::boltzmann * temperature / mass);
}

namespace {

void normalise(std::vector<VelocityNode>& nodes) {
  CompensatedSum total;
  for (const auto& n : nodes) total.add(n.weight);
  const double t = total.value();
  for (auto& n : nodes) n.weight /= t;
}

std::vector<VelocityNode> trapezoid(std::size_t n, double sigma, double span) {
  std::vector<VelocityNode> nodes(n);
  const double vmax = span * sigma;
  const double step = 2.0 * vmax / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    // Mirror-exact placement keeps the grid symmetric to the last bit.
    const double offset = static_cast<double>(i) - 0.5 * static_cast<double>(n - 1);
    const double v = offset * step;
    const double end = (i == 0 || i + 1 == n) ? 0.5 : 1.0;
    nodes[i] = {v, end * std::exp(-0.5 * (v / sigma) * (v / sigma))};
  }
  return nodes;
}

// Golub-Welsch for the probabilists' Hermite weight exp(-x^2/2).
std::vector<VelocityNode> gauss_hermite(std::size_t n, double sigma) {
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t k = 1; k < n; ++k) {
    const double b = std::sqrt(static_cast<double>(k));
    jacobi(static_cast<Eigen::Index>(k - 1), static_cast<Eigen::Index>(k)) = b;
    jacobi(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k - 1)) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  std::vector<VelocityNode> nodes(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    const double w0 = es.eigenvectors()(0, col);
    nodes[i] = {es.eigenvalues()(col), w0 * w0};
  }
  // Symmetrise: x_i = -x_{n-1-i}, equal weights.
  for (std::size_t i = 0; i < n / 2; ++i) {
    auto& a = nodes[i];
    auto& b = nodes[n - 1 - i];
    const double x = 0.5 * (b.velocity - a.velocity);
    const double w = 0.5 * (a.weight + b.weight);
    a = {-x, w};
    b = {x, w};
  }
  if (n % 2 == 1) nodes[n / 2].velocity = 0.0;
  for (auto& node : nodes) node.velocity *= sigma;
  return nodes;
}

}  // namespace

VelocityGrid make_grid(double temperature, double mass, std::size_t n_points, double span_sigmas, Quadrature rule) {
  if (n_points < 1) throw ValidationError("velocity grid needs at least one point");
  if (!(temperature > 0.0) || !(mass > 0.0)) throw ValidationError("temperature and mass must be > 0");
  if (rule == Quadrature::trapezoid && !(span_sigmas > 0.0)) throw ValidationError("velocity span must be > 0");

  VelocityGrid grid;
  grid.sigma = thermal_sigma(temperature, mass);
  if (n_points == 1) {
    grid.nodes = {{0.0, 1.0}};
    return grid;
  }
  grid.nodes = rule == Quadrature::trapezoid ? trapezoid(n_points, grid.sigma, span_sigmas)
                                             : gauss_hermite(n_points, grid.sigma);
  normalise(grid.nodes);
  return grid;
}

double doppler_average(std::span<const double> values, const VelocityGrid& grid) {
  if (values.size() != grid.nodes.size()) throw ValidationError("one value per velocity node required");
  CompensatedSum sum;
  for (std::size_t i = 0; i < values.size(); ++i) sum.add(grid.nodes[i].weight * values[i]);
  return sum.value();
}

double doppler_average(const std::function<double(double)>& f, const VelocityGrid& grid) {
  std::vector<double> values(grid.nodes.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = f(grid.nodes[i].velocity);
  return doppler_average(values, grid);
}

}  // namespace rydelec
