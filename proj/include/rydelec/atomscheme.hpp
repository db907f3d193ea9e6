#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rydelec {

/// One population-decay branch out of a level. Rates are angular (rad/s).
struct DecayChannel {
  std::size_t target = 0;
  double rate = 0.0;
  /// Wavelength of the emitted photon in m; 0 when not tracked. Used by fluorescence filters.
  double photon_wavelength = 0.0;
  /// Transfer to a level that is not lower in the chain (e.g. black-body pumping between
  /// Rydberg states). Ordinary decays must point to a lower index.
  bool incoherent = false;

  bool operator==(const DecayChannel&) const = default;
};

struct Level {
  std::string label;
  std::size_t index = 0;
  std::vector<DecayChannel> decays;
  /// Pure dephasing in rad/s. Adds this rate to the damping of every coherence with the level.
  double extra_dephasing = 0.0;
  /// Declared total decay rate, checked against the branch sum. Empty means "sum of branches".
  std::optional<double> declared_total_decay;

  double total_decay() const;
  bool operator==(const Level&) const = default;
};

/// Laser beam at the cell. Waist is the 1/e^2 intensity radius.
struct BeamParams {
  double power = 0.0;          // W
  double waist_radius = 0.0;   // m
  double dipole_moment = 0.0;  // C m

  bool operator==(const BeamParams&) const = default;
};

/// Peak-field Rabi rate Omega = d E / hbar for a Gaussian beam, E = sqrt(4 P / (pi w^2 c eps0)).
double rabi_from_power(const BeamParams& beam);

/// Field amplitude (V/m) to Rabi rate (rad/s).
double rabi_from_field(double field, double dipole_moment);

struct Drive {
  std::string name;
  std::size_t lower = 0;
  std::size_t upper = 0;
  double rabi = 0.0;      // rad/s
  double detuning = 0.0;  // rad/s, laser minus atomic frequency
  double wavelength = 0.0;  // m; irrelevant when propagation_sign == 0
  int propagation_sign = 0;
  bool is_probe = false;
  /// Transition dipole (C m), 0 when unknown. Required for the probe and for field/power drives.
  double dipole_moment = 0.0;

  /// How the Rabi rate is specified. When set, `rabi` is derived from them.
  struct Beam {
    double power = 0.0;
    double waist_radius = 0.0;
    bool operator==(const Beam&) const = default;
  };
  std::optional<Beam> beam;
  std::optional<double> field;  // V/m amplitude (RF drives)

  void set_rabi(double omega);
  void set_beam_power(double watts);
  void set_field(double volts_per_metre);

  bool operator==(const Drive&) const = default;
};

struct LadderScheme {
  std::string name;
  std::vector<Level> levels;
  std::vector<Drive> drives;
  double atom_mass = 0.0;       // kg
  double temperature = 0.0;     // K
  double number_density = 0.0;  // m^-3
  double cell_length = 0.0;     // m
  double transit_rate = 0.0;    // rad/s, uniform relaxation of every excited level to level 0
  double interaction_radius = 0.0;  // m, radius of the interrogated cylinder

  std::size_t dim() const { return levels.size(); }
  const Drive& probe() const;
  std::size_t probe_index() const;
  /// Index of the drive with this name; throws ValidationError when absent.
  std::size_t drive_index(std::string_view drive_name) const;
  /// The drive with propagation_sign 0 coupling the highest levels, if any ("rf" by name first).
  std::optional<std::size_t> rf_drive_index() const;

  bool operator==(const LadderScheme&) const = default;
};

/// Throws ValidationError naming the violated invariant.
void validate(const LadderScheme& scheme);

/// Parses the JSON scheme format (comments allowed) and validates it. Throws ParseError with
/// the line and field on malformed input, ValidationError on broken invariants.
LadderScheme load_scheme(std::string_view config_text);
LadderScheme load_scheme_file(const std::string& path);

/// Canonical JSON form: angular rates in rad/s, every number at full precision.
std::string serialize_scheme(const LadderScheme& scheme);

/// Built-in cesium 6S-6P-9S-35P-34D scheme (the contents of configs/cs5.cfg).
std::string_view default_scheme_text();
LadderScheme default_scheme();

/// Signed cumulative wavevector (rad/m) from level 0 to each level along the drive tree.
/// Element 0 is 0; for a ladder, element k is k1 s1 + ... + kk sk.
std::vector<double> residual_wavevector(const LadderScheme& scheme);

/// Sign of traversal from level 0 to each level for every drive on the path: entry (l, d) is
/// +1 if the path climbs drive d, -1 if it descends it, 0 if drive d is not on the path.
std::vector<std::vector<int>> drive_paths(const LadderScheme& scheme);

}  // namespace rydelec
