#include "rydelec/units.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <optional>
#include <utility>

#include "rydelec/error.hpp"

namespace rydelec {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::parse: return "parse";
    case ErrorKind::validation: return "validation";
    case ErrorKind::solver: return "solver";
    case ErrorKind::analysis: return "analysis";
  }
  return "unknown";
}

namespace units {

double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }
double mw_to_dbm(double mw) { return 10.0 * std::log10(mw); }

double parse_number(std::string_view text) {
  if (text.empty()) throw ParseError("empty number");
  // from_chars rejects a leading '+', accept it for convenience.
  std::string_view body = text;
  if (body.front() == '+') body.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), value);
  if (ec != std::errc{} || ptr != body.data() + body.size()) {
    throw ParseError("not a number: '" + std::string(text) + "'");
  }
  return value;
}

std::string format_number(double value) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), ptr);
}

namespace {

struct Suffix {
  std::string_view name;
  double scale;
};

constexpr std::array frequency_suffixes{Suffix{"GHz", 1e9}, Suffix{"MHz", 1e6}, Suffix{"kHz", 1e3},
                                        Suffix{"Hz", 1.0}};
constexpr std::array field_suffixes{Suffix{"uV/m", 1e-6}, Suffix{"mV/m", 1e-3}, Suffix{"V/m", 1.0}};
constexpr std::array power_suffixes{Suffix{"nW", 1e-9}, Suffix{"uW", 1e-6}, Suffix{"mW", 1e-3},
                                    Suffix{"W", 1.0}};
constexpr std::array time_suffixes{Suffix{"ns", 1e-9}, Suffix{"us", 1e-6}, Suffix{"ms", 1e-3},
                                   Suffix{"s", 1.0}};
constexpr std::array length_suffixes{Suffix{"nm", 1e-9}, Suffix{"um", 1e-6}, Suffix{"mm", 1e-3},
                                     Suffix{"m", 1.0}};

template <std::size_t N>
double parse_with(std::string_view text, const std::array<Suffix, N>& table, const char* what) {
  for (const auto& s : table) {
    if (text.size() > s.name.size() && text.ends_with(s.name)) {
      const auto number = text.substr(0, text.size() - s.name.size());
      // Reject "1mMHz" style garbage: the remaining part must be a plain number.
      return parse_number(number) * s.scale;
    }
  }
  throw ParseError("expected a " + std::string(what) + " with unit suffix, got '" + std::string(text) + "'");
}

template <std::size_t N>
std::optional<double> exact_scale(std::string_view unit, const std::array<Suffix, N>& table) {
  for (const auto& s : table) {
    if (unit == s.name) return s.scale;
  }
  return std::nullopt;
}

}  // namespace

double to_si(double value, std::string_view unit, Dimension dim) {
  std::optional<double> scale;
  switch (dim) {
    case Dimension::frequency: scale = exact_scale(unit, frequency_suffixes); break;
    case Dimension::field: scale = exact_scale(unit, field_suffixes); break;
    case Dimension::power:
      if (unit == "dBm") return dbm_to_mw(value) * 1e-3;
      scale = exact_scale(unit, power_suffixes);
      break;
    case Dimension::time: scale = exact_scale(unit, time_suffixes); break;
    case Dimension::length: scale = exact_scale(unit, length_suffixes); break;
    case Dimension::dimensionless:
      if (unit.empty() || unit == "1") scale = 1.0;
      break;
  }
  if (!scale) throw ParseError("unknown unit '" + std::string(unit) + "'");
  return *scale == 1.0 ? value : value * *scale;
}

double parse_quantity(std::string_view text, Dimension dim) {
  switch (dim) {
    case Dimension::frequency: return parse_with(text, frequency_suffixes, "frequency (GHz|MHz|kHz|Hz)");
    case Dimension::field: return parse_with(text, field_suffixes, "field (uV/m|mV/m|V/m)");
    case Dimension::power:
      if (text.size() > 3 && text.ends_with("dBm")) {
        return dbm_to_mw(parse_number(text.substr(0, text.size() - 3))) * 1e-3;
      }
      return parse_with(text, power_suffixes, "power (nW|uW|mW|W|dBm)");
    case Dimension::time: return parse_with(text, time_suffixes, "time (ns|us|ms|s)");
    case Dimension::length: return parse_with(text, length_suffixes, "length (nm|um|mm|m)");
    case Dimension::dimensionless: return parse_number(text);
  }
  throw ParseError("unknown dimension");
}

}  // namespace units
}  // namespace rydelec
