#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "rydelec/atomscheme.hpp"
#include "rydelec/units.hpp"

namespace rydelec::test {

/// Ground state 0 and excited state 1 decaying at `gamma`, driven by a probe.
inline LadderScheme two_level(double gamma, double rabi, double detuning = 0.0) {
  LadderScheme s;
  s.name = "two-level";
  s.levels.resize(2);
  s.levels[0].label = "g";
  s.levels[0].index = 0;
  s.levels[1].label = "e";
  s.levels[1].index = 1;
  if (gamma > 0.0) s.levels[1].decays.push_back({0, gamma, 852e-9, false});
  Drive d;
  d.name = "probe";
  d.lower = 0;
  d.upper = 1;
  d.rabi = rabi;
  d.detuning = detuning;
  d.wavelength = 852e-9;
  d.propagation_sign = 1;
  d.is_probe = true;
  d.dipole_moment = 2.5e-29;
  s.drives.push_back(d);
  s.atom_mass = units::cs133_mass;
  s.temperature = 295.0;
  return s;
}

/// Ladder of `n` levels with random rates, random detunings and random beam directions.
inline LadderScheme random_ladder(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto log_uniform = [&](double lo, double hi) { return lo * std::pow(hi / lo, unit(rng)); };
  LadderScheme s;
  s.name = "random";
  s.levels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.levels[i].index = i;
    s.levels[i].label = "L" + std::to_string(i);
    if (i == 0) continue;
    s.levels[i].decays.push_back({i - 1, units::angular(log_uniform(1e3, 1e7)), 0.0, false});
    if (i > 1 && unit(rng) < 0.5) s.levels[i].decays.push_back({0, units::angular(log_uniform(1e3, 1e6)), 0.0, false});
    if (unit(rng) < 0.3) s.levels[i].extra_dephasing = units::angular(log_uniform(1e2, 1e6));
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    Drive d;
    d.name = "d" + std::to_string(i);
    d.lower = i;
    d.upper = i + 1;
    d.rabi = unit(rng) < 0.1 ? 0.0 : units::angular(log_uniform(1e4, 5e7));
    d.detuning = units::angular((unit(rng) - 0.5) * 40e6);
    const int signs[] = {-1, 0, 1};
    d.propagation_sign = signs[rng() % 3];
    d.wavelength = d.propagation_sign == 0 ? 0.0 : log_uniform(400e-9, 3000e-9);
    d.is_probe = i == 0;
    d.dipole_moment = i == 0 ? 2.5e-29 : 0.0;
    s.drives.push_back(d);
  }
  s.atom_mass = units::cs133_mass;
  s.temperature = 295.0;
  s.transit_rate = unit(rng) < 0.5 ? units::angular(log_uniform(1e3, 1e5)) : 0.0;
  return s;
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("rydelec-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline double lorentzian(double x, double center, double fwhm, double height = 1.0) {
  const double u = 2.0 * (x - center) / fwhm;
  return height / (1.0 + u * u);
}

}  // namespace rydelec::test
