#include "rydelec/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "rydelec/error.hpp"
#include "rydelec/units.hpp"

namespace rydelec {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(delim, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string row_context(std::size_t row, std::size_t line, std::string_view content) {
  return "data row " + std::to_string(row) + " (line " + std::to_string(line) + ", '" + std::string(trim(content)) +
         "')";
}

}  // namespace

std::size_t RawTrace::column(std::string_view name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw ParseError("missing column '" + std::string(name) + "'", 0, std::string(name));
  return static_cast<std::size_t>(it - columns.begin());
}

std::vector<double> RawTrace::column_values(std::size_t index) const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.at(index));
  return out;
}

RawTrace parse_raw(std::string_view text) {
  RawTrace raw;
  char delim = ',';
  bool have_header = false;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    const std::string_view line = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    const auto body = trim(line);
    if (body.empty()) continue;

    if (!have_header) {
      if (body.front() == '#') {
        const auto meta = trim(body.substr(1));
        const auto colon = meta.find(':');
        if (colon != std::string_view::npos) {
          raw.metadata[std::string(trim(meta.substr(0, colon)))] = std::string(trim(meta.substr(colon + 1)));
        }
        continue;
      }
      delim = body.find('\t') != std::string_view::npos ? '\t' : ',';
      for (const auto name : split(body, delim)) {
        if (name.empty()) throw ParseError("empty column name in header", line_no);
        if (std::find(raw.columns.begin(), raw.columns.end(), name) != raw.columns.end()) {
          throw ParseError("duplicate column '" + std::string(name) + "'", line_no, std::string(name));
        }
        raw.columns.emplace_back(name);
      }
      have_header = true;
      continue;
    }
    if (body.front() == '#') continue;

    const std::size_t row = raw.rows.size() + 1;
    const auto fields = split(body, delim);
    if (fields.size() != raw.columns.size()) {
      throw ParseError(row_context(row, line_no, line) + ": expected " + std::to_string(raw.columns.size()) +
                           " fields, got " + std::to_string(fields.size()),
                       line_no);
    }
    std::vector<double> values;
    values.reserve(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      double v = 0.0;
      try {
        v = units::parse_number(fields[c]);
      } catch (const ParseError&) {
        throw ParseError(row_context(row, line_no, line) + ": column '" + raw.columns[c] + "' is not a number",
                         line_no, raw.columns[c]);
      }
      if (!std::isfinite(v)) {
        throw ParseError(row_context(row, line_no, line) + ": column '" + raw.columns[c] + "' is not finite",
                         line_no, raw.columns[c]);
      }
      values.push_back(v);
    }
    raw.rows.push_back(std::move(values));
    raw.lines.push_back(line_no);
  }
  if (!have_header) throw ParseError("no header row");
  return raw;
}

RawTrace read_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_raw(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line(), e.field());
  }
}

std::string write_raw(const RawTrace& raw) {
  std::string out;
  // Tab separated only when a column name needs the comma.
  const bool tabs = std::any_of(raw.columns.begin(), raw.columns.end(),
                                [](const std::string& c) { return c.find(',') != std::string::npos; });
  const char delim = tabs ? '\t' : ',';
  for (const auto& [key, value] : raw.metadata) out += "# " + key + ": " + value + "\n";
  for (std::size_t c = 0; c < raw.columns.size(); ++c) {
    if (c) out += delim;
    out += raw.columns[c];
  }
  out += '\n';
  for (const auto& row : raw.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += delim;
      out += units::format_number(row[c]);
    }
    out += '\n';
  }
  return out;
}

namespace {

// Unit of the axis column to (scale, canonical label); unknown labels are kept unscaled.
std::pair<double, std::string> axis_unit(std::string_view unit, TraceKind kind) {
  try {
    return {units::to_si(1.0, unit, units::Dimension::time), "s"};
  } catch (const ParseError&) {
  }
  if (kind == TraceKind::time) throw ParseError("time axis unit must be one of ns, us, ms, s, got '" + std::string(unit) + "'");
  try {
    return {units::to_si(1.0, unit, units::Dimension::frequency), "Hz"};
  } catch (const ParseError&) {
  }
  return {1.0, std::string(unit)};
}

}  // namespace

Trace parse_trace(const RawTrace& raw, const ColumnMapping& mapping) {
  const std::size_t ax = raw.column(mapping.axis);
  const std::size_t val = raw.column(mapping.value);
  const auto [scale, label] = axis_unit(mapping.axis_units, mapping.kind);
  std::vector<double> axis = raw.column_values(ax);
  if (scale != 1.0) {
    for (auto& a : axis) a *= scale;
  }
  std::vector<double> values = raw.column_values(val);

  const bool increasing = axis.size() < 2 || axis[1] > axis[0];
  for (std::size_t i = 1; i < axis.size(); ++i) {
    const bool ok = increasing ? axis[i] > axis[i - 1] : axis[i] < axis[i - 1];
    if (!ok || (mapping.kind == TraceKind::time && !increasing)) {
      throw ParseError("axis column '" + mapping.axis + "' is not strictly " +
                           (mapping.kind == TraceKind::time ? "increasing" : "monotone") + " at data row " +
                           std::to_string(i + 1),
                       i < raw.lines.size() ? raw.lines[i] : 0, mapping.axis);
    }
  }

  if (mapping.kind == TraceKind::time) {
    TimeTrace t{std::move(axis), std::move(values), mapping.value_units};
    t.validate();
    return t;
  }
  SpectrumTrace s{mapping.axis, label, std::move(axis), std::move(values), mapping.value_units};
  s.validate();
  return s;
}

Trace parse_trace(std::string_view text, const ColumnMapping& mapping) { return parse_trace(parse_raw(text), mapping); }

namespace {

std::string two_columns(const std::string& axis_name, const std::string& axis_units, const std::vector<double>& axis,
                        const std::string& units, const std::vector<double>& values) {
  RawTrace raw;
  raw.metadata["axis_units"] = axis_units;
  raw.metadata["units"] = units;
  raw.columns = {axis_name, "value"};
  raw.rows.reserve(axis.size());
  for (std::size_t i = 0; i < axis.size(); ++i) raw.rows.push_back({axis[i], values[i]});
  return write_raw(raw);
}

}  // namespace

std::string write_trace(const SpectrumTrace& trace) {
  trace.validate();
  return two_columns(trace.axis_name.empty() ? "axis" : trace.axis_name, trace.axis_units, trace.axis, trace.units,
                     trace.values);
}

std::string write_trace(const TimeTrace& trace) {
  trace.validate();
  return two_columns("time", "s", trace.times, trace.units, trace.values);
}

SnrTable parse_snr_table(const RawTrace& raw, const SnrMapping& mapping) {
  const std::size_t pc = raw.column(mapping.probe_power);
  const std::size_t ec = raw.column(mapping.lo_field);
  const std::size_t sc = raw.column(mapping.snr);
  SnrTable table;
  std::map<std::pair<double, double>, std::size_t> seen;
  for (std::size_t i = 0; i < raw.rows.size(); ++i) {
    const auto& r = raw.rows[i];
    SnrRecord rec{units::to_si(r[pc], mapping.probe_power_units, units::Dimension::power),
                  units::to_si(r[ec], mapping.lo_field_units, units::Dimension::field), r[sc]};
    const auto key = std::make_pair(rec.probe_power, rec.lo_field);
    if (const auto it = seen.find(key); it != seen.end()) {
      table.records[it->second] = rec;
      table.warnings.push_back("duplicate cell (probe power " + units::format_number(rec.probe_power) +
                               " W, LO field " + units::format_number(rec.lo_field) + " V/m) at data row " +
                               std::to_string(i + 1) + ": last value wins");
    } else {
      seen.emplace(key, table.records.size());
      table.records.push_back(rec);
    }
  }
  return table;
}

SnrTable parse_snr_table(std::string_view text, const SnrMapping& mapping) {
  return parse_snr_table(parse_raw(text), mapping);
}

SensitivityMap sensitivity_map_from_table(const SnrTable& table, double p_sig_dbm, double rbw,
                                          const CalibrationFit& fit) {
  if (table.records.empty()) throw AnalysisError("SNR table has no records");
  SensitivityMap map;
  for (const auto& r : table.records) {
    map.probe_powers.push_back(r.probe_power);
    map.lo_fields.push_back(r.lo_field);
  }
  for (auto* v : {&map.probe_powers, &map.lo_fields}) {
    std::sort(v->begin(), v->end());
    v->erase(std::unique(v->begin(), v->end()), v->end());
  }
  const std::size_t cells = map.probe_powers.size() * map.lo_fields.size();
  map.sensitivity.assign(cells, std::numeric_limits<double>::quiet_NaN());
  map.snr_db.assign(cells, std::numeric_limits<double>::quiet_NaN());
  std::vector<bool> filled(cells, false);
  auto index = [](const std::vector<double>& v, double x) {
    return static_cast<std::size_t>(std::lower_bound(v.begin(), v.end(), x) - v.begin());
  };
  for (const auto& r : table.records) {
    const std::size_t cell = index(map.probe_powers, r.probe_power) * map.lo_fields.size() + index(map.lo_fields, r.lo_field);
    map.snr_db[cell] = r.snr_db;
    map.sensitivity[cell] = sensitivity_from_snr(p_sig_dbm, r.snr_db, rbw, fit);
    filled[cell] = true;
  }
  for (std::size_t ip = 0; ip < map.probe_powers.size(); ++ip) {
    for (std::size_t il = 0; il < map.lo_fields.size(); ++il) {
      if (!filled[ip * map.lo_fields.size() + il]) {
        map.failures.push_back("no measurement at probe power " + units::format_number(map.probe_powers[ip]) +
                               " W, LO field " + units::format_number(map.lo_fields[il]) + " V/m");
      }
    }
  }
  return map;
}

}  // namespace rydelec
