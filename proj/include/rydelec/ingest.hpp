#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rydelec/calibrate.hpp"
#include "rydelec/dynamics.hpp"
#include "rydelec/observables.hpp"

namespace rydelec {

/// Delimited numeric table. Text layout:
///
///   # key: value        metadata lines (optional, before the header)
///   col_a,col_b         header row, comma or tab separated
///   1.5,2.25            data rows
///
/// Blank lines are skipped; CRLF is accepted on input.
struct RawTrace {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::map<std::string, std::string> metadata;
  /// 1-based text line of each data row, for diagnostics.
  std::vector<std::size_t> lines;

  /// Index of a named column; throws ParseError when absent.
  std::size_t column(std::string_view name) const;
  std::vector<double> column_values(std::size_t index) const;
};

/// Parses the table. Every value must be a finite decimal number; malformed or non-finite rows
/// throw ParseError naming the data row, line and content.
RawTrace parse_raw(std::string_view text);
RawTrace read_raw(const std::filesystem::path& path);

/// Canonical form: metadata sorted by key, comma separated, shortest round-trip numbers, LF.
std::string write_raw(const RawTrace& raw);

enum class TraceKind { spectrum, time };

/// Explicit column roles. `axis_units` is the unit of the axis column in the file: a time or
/// frequency unit (converted to s or Hz), or any other label kept as is for spectra.
struct ColumnMapping {
  TraceKind kind = TraceKind::spectrum;
  std::string axis;
  std::string value;
  std::string axis_units = "s";
  std::string value_units;
};

using Trace = std::variant<SpectrumTrace, TimeTrace>;

/// Mapped trace, validated. A non-monotone axis (or non-increasing time) throws ParseError
/// naming the data row.
Trace parse_trace(const RawTrace& raw, const ColumnMapping& mapping);
Trace parse_trace(std::string_view text, const ColumnMapping& mapping);

/// Canonical two-column text for a trace, with units recorded as metadata.
std::string write_trace(const SpectrumTrace& trace);
std::string write_trace(const TimeTrace& trace);

struct SnrRecord {
  double probe_power = 0.0;  // W
  double lo_field = 0.0;     // V/m
  double snr_db = 0.0;
  bool operator==(const SnrRecord&) const = default;
};

struct SnrMapping {
  std::string probe_power = "probe_power";
  std::string lo_field = "lo_field";
  std::string snr = "snr_db";
  std::string probe_power_units = "W";
  std::string lo_field_units = "V/m";
};

struct SnrTable {
  std::vector<SnrRecord> records;  // one per (probe power, LO field) cell, first-seen order
  std::vector<std::string> warnings;
};

/// Repeated (probe power, LO field) cells keep the last value and add a warning.
SnrTable parse_snr_table(const RawTrace& raw, const SnrMapping& mapping = {});
SnrTable parse_snr_table(std::string_view text, const SnrMapping& mapping = {});

/// Sensitivity per measured cell via sensitivity_from_snr on sorted unique grids. Cells without
/// a record are NaN and listed as failures.
SensitivityMap sensitivity_map_from_table(const SnrTable& table, double p_sig_dbm, double rbw,
                                          const CalibrationFit& fit);

}  // namespace rydelec
