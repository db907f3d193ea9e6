#include "rydelec/atomscheme.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rydelec/error.hpp"
#include "rydelec/units.hpp"

namespace rydelec {

using json = nlohmann::ordered_json;

double Level::total_decay() const {
  double sum = 0.0;
  for (const auto& d : decays) sum += d.rate;
  return sum;
}

double rabi_from_field(double field, double dipole_moment) {
  return dipole_moment * field / units::hbar;
}

double rabi_from_power(const BeamParams& beam) {
  if (!(beam.power > 0.0) || !(beam.waist_radius > 0.0) || !(beam.dipole_moment > 0.0)) {
    throw ValidationError("beam power, waist radius and dipole moment must be strictly positive");
  }
  const double w2 = beam.waist_radius * beam.waist_radius;
  const double peak_field =
      std::sqrt(4.0 * beam.power / (std::numbers::pi * w2 * units::speed_of_light * units::epsilon0));
  return rabi_from_field(peak_field, beam.dipole_moment);
}

void Drive::set_rabi(double omega) {
  rabi = omega;
  beam.reset();
  field.reset();
}

void Drive::set_beam_power(double watts) {
  if (!beam) throw ValidationError("drive '" + name + "' has no beam to set a power on");
  beam->power = watts;
  rabi = rabi_from_power({watts, beam->waist_radius, dipole_moment});
}

void Drive::set_field(double volts_per_metre) {
  if (!(dipole_moment > 0.0)) {
    throw ValidationError("drive '" + name + "' needs a dipole moment to convert a field to a Rabi rate");
  }
  beam.reset();
  field = volts_per_metre;
  rabi = rabi_from_field(volts_per_metre, dipole_moment);
}

const Drive& LadderScheme::probe() const { return drives.at(probe_index()); }

std::size_t LadderScheme::probe_index() const {
  for (std::size_t i = 0; i < drives.size(); ++i) {
    if (drives[i].is_probe) return i;
  }
  throw ValidationError("scheme has no probe drive");
}

std::size_t LadderScheme::drive_index(std::string_view drive_name) const {
  for (std::size_t i = 0; i < drives.size(); ++i) {
    if (drives[i].name == drive_name) return i;
  }
  throw ValidationError("scheme has no drive named '" + std::string(drive_name) + "'");
}

std::optional<std::size_t> LadderScheme::rf_drive_index() const {
  for (std::size_t i = 0; i < drives.size(); ++i) {
    if (drives[i].name == "rf") return i;
  }
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < drives.size(); ++i) {
    if (drives[i].propagation_sign == 0 && (!best || drives[i].upper > drives[*best].upper)) best = i;
  }
  return best;
}

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError(message);
}

bool finite_nonneg(double x) { return std::isfinite(x) && x >= 0.0; }

}  // namespace

std::vector<std::vector<int>> drive_paths(const LadderScheme& scheme) {
  const std::size_t n = scheme.levels.size();
  std::vector<std::vector<int>> path(n, std::vector<int>(scheme.drives.size(), 0));
  std::vector<bool> seen(n, false);
  if (n == 0) return path;
  seen[0] = true;
  std::vector<std::size_t> frontier{0};
  while (!frontier.empty()) {
    const std::size_t at = frontier.back();
    frontier.pop_back();
    for (std::size_t d = 0; d < scheme.drives.size(); ++d) {
      const auto& drive = scheme.drives[d];
      std::size_t other = n;
      int sign = 0;
      if (drive.lower == at) {
        other = drive.upper;
        sign = +1;
      } else if (drive.upper == at) {
        other = drive.lower;
        sign = -1;
      }
      if (other >= n || seen[other]) continue;
      seen[other] = true;
      path[other] = path[at];
      path[other][d] = sign;
      frontier.push_back(other);
    }
  }
  return path;
}

void validate(const LadderScheme& s) {
  const std::size_t n = s.levels.size();
  require(n >= 2, "scheme needs at least two levels");
  require(std::isfinite(s.temperature) && s.temperature > 0.0, "temperature must be > 0");
  require(std::isfinite(s.atom_mass) && s.atom_mass > 0.0, "atom mass must be > 0");
  require(finite_nonneg(s.number_density), "number density must be >= 0");
  require(finite_nonneg(s.cell_length), "cell length must be >= 0");
  require(finite_nonneg(s.transit_rate), "transit rate must be >= 0");
  require(finite_nonneg(s.interaction_radius), "interaction radius must be >= 0");

  for (std::size_t i = 0; i < n; ++i) {
    const auto& level = s.levels[i];
    const std::string where = "level " + std::to_string(i) + " (" + level.label + ")";
    require(level.index == i, where + ": index does not match its position");
    require(finite_nonneg(level.extra_dephasing), where + ": dephasing must be >= 0");
    for (const auto& d : level.decays) {
      require(d.target < n, where + ": decay target " + std::to_string(d.target) + " does not exist");
      require(d.target != i, where + ": decay into itself");
      require(finite_nonneg(d.rate), where + ": decay rates must be >= 0");
      require(d.incoherent || d.target < i,
              where + ": decay to level " + std::to_string(d.target) +
                  " is not lower in the chain and not marked incoherent");
      require(finite_nonneg(d.photon_wavelength), where + ": photon wavelength must be >= 0");
    }
    if (level.declared_total_decay) {
      const double declared = *level.declared_total_decay;
      const double sum = level.total_decay();
      require(std::abs(sum - declared) <= 1e-12 * std::max(std::abs(declared), std::abs(sum)),
              where + ": branch rates sum to " + units::format_number(sum) +
                  " rad/s but the declared total decay is " + units::format_number(declared));
    }
  }

  std::size_t probes = 0;
  std::set<std::string> names;
  for (std::size_t k = 0; k < s.drives.size(); ++k) {
    const auto& d = s.drives[k];
    const std::string where = "drive " + std::to_string(k) + " (" + d.name + ")";
    require(!d.name.empty(), where + ": drives need a name");
    require(names.insert(d.name).second, where + ": duplicate drive name");
    require(d.lower < n, where + ": lower level " + std::to_string(d.lower) + " does not exist");
    require(d.upper < n, where + ": upper level " + std::to_string(d.upper) + " does not exist");
    require(d.lower != d.upper, where + ": couples a level to itself");
    require(finite_nonneg(d.rabi), where + ": rabi must be >= 0");
    require(std::isfinite(d.detuning), where + ": detuning must be finite");
    require(d.propagation_sign >= -1 && d.propagation_sign <= 1, where + ": propagation sign must be -1, 0 or +1");
    require(d.propagation_sign == 0 || (std::isfinite(d.wavelength) && d.wavelength > 0.0),
            where + ": wavelength must be > 0 when the beam propagates");
    require(finite_nonneg(d.dipole_moment), where + ": dipole moment must be >= 0");
    if (d.is_probe) {
      ++probes;
      require(d.dipole_moment > 0.0, where + ": the probe needs a dipole moment");
    }
    if (d.beam) {
      require(d.beam->power > 0.0 && d.beam->waist_radius > 0.0 && d.dipole_moment > 0.0,
              where + ": beam power, waist and dipole must be > 0");
    }
    if (d.field) {
      require(finite_nonneg(*d.field) && d.dipole_moment > 0.0, where + ": field needs a dipole moment and must be >= 0");
    }
  }
  require(probes == 1, "exactly one drive must be tagged as the probe (found " + std::to_string(probes) + ")");

  // Drives must form a spanning tree rooted at level 0 so every level has one rotating frame.
  require(s.drives.size() == n - 1, "drives do not form a connected chain: " + std::to_string(s.drives.size()) +
                                        " drives for " + std::to_string(n) + " levels");
  std::vector<std::size_t> parent(n);
  for (std::size_t i = 0; i < n; ++i) parent[i] = i;
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& d : s.drives) {
    const auto a = find(d.lower), b = find(d.upper);
    require(a != b, "drives do not form a connected chain: drive '" + d.name + "' closes a loop");
    parent[a] = b;
  }
  for (std::size_t i = 1; i < n; ++i) {
    require(find(i) == find(0), "drives do not form a connected chain: level " + std::to_string(i) + " is disconnected");
  }
}

std::vector<double> residual_wavevector(const LadderScheme& scheme) {
  const auto paths = drive_paths(scheme);
  std::vector<double> k(scheme.levels.size(), 0.0);
  for (std::size_t level = 0; level < k.size(); ++level) {
    double sum = 0.0;
    for (std::size_t d = 0; d < scheme.drives.size(); ++d) {
      const auto& drive = scheme.drives[d];
      if (paths[level][d] == 0 || drive.propagation_sign == 0) continue;
      sum += paths[level][d] * drive.propagation_sign * units::two_pi / drive.wavelength;
    }
    k[level] = sum;
  }
  return k;
}

// ---------------------------------------------------------------------------------------------
// JSON format

namespace {

std::size_t line_of_offset(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

class Reader {
 public:
  Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) fail(path_, "expected an object");
  }

  [[noreturn]] static void fail(const std::string& field, const std::string& msg) {
    throw ParseError(field + ": " + msg, 0, field);
  }

  bool has(const char* key) const {
    used_.insert(key);
    return node_.contains(key);
  }

  double number(const char* key) const {
    const auto& v = at(key);
    if (!v.is_number()) fail(field(key), "expected a number");
    return v.get<double>();
  }

  double number_or(const char* key, double fallback) const { return has(key) ? number(key) : fallback; }

  std::size_t index(const char* key) const {
    const auto& v = at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) fail(field(key), "expected a non-negative integer");
    return v.get<std::size_t>();
  }

  int integer(const char* key) const {
    const auto& v = at(key);
    if (!v.is_number_integer()) fail(field(key), "expected an integer");
    return v.get<int>();
  }

  bool boolean_or(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = at(key);
    if (!v.is_boolean()) fail(field(key), "expected true or false");
    return v.get<bool>();
  }

  std::string text_or(const char* key, std::string fallback) const {
    if (!has(key)) return fallback;
    const auto& v = at(key);
    if (!v.is_string()) fail(field(key), "expected a string");
    return v.get<std::string>();
  }

  const json& array(const char* key) const {
    const auto& v = at(key);
    if (!v.is_array()) fail(field(key), "expected an array");
    return v;
  }

  /// Angular rate from either `<stem>_hz` (cycles) or `<stem>_rad_s`.
  std::optional<double> rate(const std::string& stem) const {
    const std::string hz = stem + "_hz", rad = stem + "_rad_s";
    const bool a = has(hz.c_str()), b = has(rad.c_str());
    if (a && b) fail(field(stem.c_str()), "give either " + hz + " or " + rad + ", not both");
    if (a) return units::angular(number(hz.c_str()));
    if (b) return number(rad.c_str());
    return std::nullopt;
  }

  std::string field(const char* key) const { return path_ + "." + key; }

  /// Rejects keys that were never asked for, catching typos in config files.
  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (!used_.contains(key)) fail(field(key.c_str()), "unknown key");
    }
  }

 private:
  const json& at(const char* key) const {
    used_.insert(key);
    if (!node_.contains(key)) fail(field(key), "missing");
    return node_.at(key);
  }

  const json& node_;
  std::string path_;
  mutable std::set<std::string> used_;
};

Level read_level(const json& node, std::size_t position) {
  const std::string path = "levels[" + std::to_string(position) + "]";
  Reader r(node, path);
  Level level;
  level.index = r.has("index") ? r.index("index") : position;
  level.label = r.text_or("label", "L" + std::to_string(position));
  level.extra_dephasing = r.rate("dephasing").value_or(0.0);
  level.declared_total_decay = r.rate("total_decay");
  if (r.has("decays")) {
    const auto& decays = r.array("decays");
    for (std::size_t j = 0; j < decays.size(); ++j) {
      Reader d(decays[j], path + ".decays[" + std::to_string(j) + "]");
      DecayChannel ch;
      ch.target = d.index("to");
      const auto rate = d.rate("rate");
      if (!rate) Reader::fail(d.field("rate_hz"), "missing");
      ch.rate = *rate;
      ch.photon_wavelength = d.number_or("photon_wavelength_m", 0.0);
      ch.incoherent = d.boolean_or("incoherent", false);
      d.finish();
      level.decays.push_back(ch);
    }
  }
  r.finish();
  return level;
}

Drive read_drive(const json& node, std::size_t position) {
  const std::string path = "drives[" + std::to_string(position) + "]";
  Reader r(node, path);
  Drive d;
  d.name = r.text_or("name", "drive" + std::to_string(position));
  d.lower = r.index("lower");
  d.upper = r.index("upper");
  d.is_probe = r.boolean_or("probe", false);
  d.detuning = r.rate("detuning").value_or(0.0);
  d.wavelength = r.number_or("wavelength_m", 0.0);
  d.propagation_sign = r.has("propagation_sign") ? r.integer("propagation_sign") : 0;
  d.dipole_moment = r.number_or("dipole_cm", 0.0);

  const auto rabi = r.rate("rabi");
  const bool has_beam = r.has("beam");
  const bool has_field = r.has("field_v_m");
  if (int(rabi.has_value()) + int(has_beam) + int(has_field) != 1) {
    Reader::fail(path, "give exactly one of rabi_hz/rabi_rad_s, beam, field_v_m");
  }
  if (rabi) d.rabi = *rabi;
  if (has_beam) {
    Reader b(node.at("beam"), path + ".beam");
    Drive::Beam beam{b.number("power_w"), b.number("waist_m")};
    b.finish();
    d.beam = beam;
    if (beam.power > 0.0 && beam.waist_radius > 0.0 && d.dipole_moment > 0.0) {
      d.rabi = rabi_from_power({beam.power, beam.waist_radius, d.dipole_moment});
    } else {
      throw ValidationError(path + ": beam power, waist and dipole must be > 0");
    }
  }
  if (has_field) {
    const double field = r.number("field_v_m");
    if (!(d.dipole_moment > 0.0)) throw ValidationError(path + ": field_v_m needs dipole_cm > 0");
    d.field = field;
    d.rabi = rabi_from_field(field, d.dipole_moment);
  }
  r.finish();
  return d;
}

}  // namespace

LadderScheme load_scheme(std::string_view config_text) {
  json root;
  try {
    root = json::parse(config_text.begin(), config_text.end(), nullptr, true, true);
  } catch (const json::parse_error& e) {
    const std::size_t line = line_of_offset(config_text, e.byte > 0 ? e.byte - 1 : 0);
    throw ParseError("line " + std::to_string(line) + ": " + e.what(), line);
  }

  Reader r(root, "scheme");
  LadderScheme s;
  s.name = r.text_or("name", "");
  const auto& levels = r.array("levels");
  for (std::size_t i = 0; i < levels.size(); ++i) s.levels.push_back(read_level(levels[i], i));
  const auto& drives = r.array("drives");
  for (std::size_t i = 0; i < drives.size(); ++i) s.drives.push_back(read_drive(drives[i], i));

  if (r.has("geometry")) {
    Reader g(root.at("geometry"), "geometry");
    s.interaction_radius = g.number_or("interaction_radius_m", 0.0);
    g.finish();
  }

  if (!r.has("cell")) Reader::fail("scheme.cell", "missing");
  Reader c(root.at("cell"), "cell");
  const bool kg = c.has("atom_mass_kg"), u = c.has("atom_mass_u");
  if (kg == u) Reader::fail("cell.atom_mass_kg", "give exactly one of atom_mass_kg or atom_mass_u");
  s.atom_mass = kg ? c.number("atom_mass_kg") : c.number("atom_mass_u") * units::atomic_mass;
  s.temperature = c.number("temperature_k");
  s.number_density = c.number_or("number_density_m3", 0.0);
  s.cell_length = c.number_or("length_m", 0.0);
  s.transit_rate = c.rate("transit_rate").value_or(0.0);
  c.finish();
  r.finish();

  validate(s);
  return s;
}

LadderScheme load_scheme_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open scheme file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_scheme(buf.str());
}

std::string serialize_scheme(const LadderScheme& s) {
  json root;
  root["name"] = s.name;
  json levels = json::array();
  for (const auto& level : s.levels) {
    json l;
    l["index"] = level.index;
    l["label"] = level.label;
    l["dephasing_rad_s"] = level.extra_dephasing;
    if (level.declared_total_decay) l["total_decay_rad_s"] = *level.declared_total_decay;
    json decays = json::array();
    for (const auto& d : level.decays) {
      json j;
      j["to"] = d.target;
      j["rate_rad_s"] = d.rate;
      j["photon_wavelength_m"] = d.photon_wavelength;
      j["incoherent"] = d.incoherent;
      decays.push_back(j);
    }
    l["decays"] = decays;
    levels.push_back(l);
  }
  root["levels"] = levels;

  json drives = json::array();
  for (const auto& d : s.drives) {
    json j;
    j["name"] = d.name;
    j["lower"] = d.lower;
    j["upper"] = d.upper;
    j["probe"] = d.is_probe;
    if (d.beam) {
      j["beam"] = json{{"power_w", d.beam->power}, {"waist_m", d.beam->waist_radius}};
    } else if (d.field) {
      j["field_v_m"] = *d.field;
    } else {
      j["rabi_rad_s"] = d.rabi;
    }
    j["dipole_cm"] = d.dipole_moment;
    j["detuning_rad_s"] = d.detuning;
    j["wavelength_m"] = d.wavelength;
    j["propagation_sign"] = d.propagation_sign;
    drives.push_back(j);
  }
  root["drives"] = drives;
  root["geometry"] = json{{"interaction_radius_m", s.interaction_radius}};
  root["cell"] = json{{"atom_mass_kg", s.atom_mass},
                      {"temperature_k", s.temperature},
                      {"number_density_m3", s.number_density},
                      {"length_m", s.cell_length},
                      {"transit_rate_rad_s", s.transit_rate}};
  return root.dump(2) + "\n";
}

LadderScheme default_scheme() { return load_scheme(default_scheme_text()); }

}  // namespace rydelec
