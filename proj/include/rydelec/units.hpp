#pragma once

#include <numbers>
#include <string>
#include <string_view>

namespace rydelec::units {

// CODATA 2018
inline constexpr double hbar = 1.054571817e-34;          // J s
inline constexpr double speed_of_light = 299792458.0;    // m/s
inline constexpr double epsilon0 = 8.8541878128e-12;     // F/m
inline constexpr double boltzmann = 1.380649e-23;        // J/K
inline constexpr double atomic_mass = 1.66053906660e-27; // kg
inline constexpr double cs133_mass = 132.905451961 * atomic_mass;

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Cycles per second to angular frequency.
constexpr double angular(double hz) { return two_pi * hz; }
constexpr double cycles(double rad_per_s) { return rad_per_s / two_pi; }

/// dBm <-> milliwatts.
double dbm_to_mw(double dbm);
double mw_to_dbm(double mw);

enum class Dimension { frequency, field, power, time, length, dimensionless };

/// Parses a number with a mandatory unit suffix, e.g. "-30MHz", "20mV/m", "50uW", "-60dBm",
/// "150ns". Returns SI (Hz, V/m, W, s, m). Suffix matching is exact and case-sensitive; no
/// whitespace is accepted between number and unit. Throws ParseError.
double parse_quantity(std::string_view text, Dimension dim);

/// Converts `value` given in `unit` (one of the parse_quantity suffixes, or "" / "1" for
/// dimensionless) to SI. Throws ParseError for an unknown unit.
double to_si(double value, std::string_view unit, Dimension dim);

/// Locale-independent strict double parse of the whole string. Throws ParseError.
double parse_number(std::string_view text);

/// Shortest round-trip decimal representation.
std::string format_number(double value);

}  // namespace rydelec::units
