// config.hpp
// Experiment configuration files: TOML-style sections of `key = value`
// lines, one section per module plus [run].
//
//   [channel]
//   core_loss_db = 5.8
//   [run]
//   mode = "analytic"   # or "montecarlo"

#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "keyrate.hpp"
#include "linksim.hpp"

namespace mcfqkd {

enum class RunMode { analytic, montecarlo };

inline const char* to_string(RunMode m) {
  return m == RunMode::analytic ? "analytic" : "montecarlo";
}

inline const char* to_string(QberCombination q) {
  return q == QberCombination::detection_weighted ? "detection_weighted" : "worst_case";
}

struct ExperimentConfig {
  LinkConfig link;
  SecurityParams security;
  RunMode mode = RunMode::analytic;
  std::uint64_t seed = 1;
  std::int64_t pulses = 10'000'000;  // Monte Carlo budget per operating point
  double duration = 3600.0;          // s, stability trace length

  void validate() const {
    link.validate();
    security.validate();
    if (link.dimension != security.d)
      throw std::invalid_argument("security.d must match the link dimension");
    if (pulses <= 0) throw std::invalid_argument("run.pulses must be > 0");
    if (!(duration > 0.0)) throw std::invalid_argument("run.duration must be > 0");
  }
};

class ConfigError : public std::runtime_error {
public:
  ConfigError(const std::string& source, int line, const std::string& field,
              const std::string& message)
      : std::runtime_error(format(source, line, field, message)), line_(line), field_(field) {}

  int line() const { return line_; }
  const std::string& field() const { return field_; }

private:
  static std::string format(const std::string& source, int line, const std::string& field,
                            const std::string& message) {
    std::string s = source;
    if (line > 0) s += ":" + std::to_string(line);
    if (!field.empty()) s += ": " + field;
    return s + ": " + message;
  }

  int line_;
  std::string field_;
};

namespace detail {

using FieldRef = std::variant<double*, int*, bool*, std::int64_t*, std::uint64_t*, RunMode*,
                              QberCombination*>;

struct Field {
  const char* section;
  const char* key;
  FieldRef ref;
};

// Every settable field, in canonical dump order.
inline std::vector<Field> config_fields(ExperimentConfig& c) {
  auto& ch = c.link.channel;
  auto& src = c.link.source;
  auto& det = c.link.detectors;
  auto& pll = c.link.pll;
  auto& sec = c.security;
  return {
      {"channel", "core_loss_db", &ch.core_loss_db},
      {"channel", "crosstalk_db", &ch.crosstalk_db},
      {"channel", "extra_attenuation_db", &ch.extra_attenuation_db},
      {"channel", "drift_rate", &ch.drift_rate},
      {"channel", "receiver_loss_db", &ch.receiver_loss_db},
      {"source", "rep_rate", &src.rep_rate},
      {"source", "mu1", &src.mu1},
      {"source", "mu2", &src.mu2},
      {"source", "p_mu1", &src.p_mu1},
      {"source", "p_z_alice", &src.p_z_alice},
      {"source", "p_z_bob", &src.p_z_bob},
      {"source", "switch_error", &src.switch_error},
      {"source", "prbs_order", &src.prbs_order},
      {"detectors", "efficiency", &det.efficiency},
      {"detectors", "dark_rate", &det.dark_rate},
      {"detectors", "leakage_rate", &det.leakage_rate},
      {"detectors", "gate_fraction", &det.gate_fraction},
      {"pll", "max_fringe_rate", &pll.max_fringe_rate},
      {"pll", "background_rate", &pll.background_rate},
      {"pll", "update_interval", &pll.update_interval},
      {"pll", "gain", &pll.gain},
      {"pll", "setpoint", &pll.setpoint},
      {"pll", "lock_threshold", &pll.lock_threshold},
      {"pll", "detector_efficiency", &pll.detector_efficiency},
      {"pll", "dead_time", &pll.dead_time},
      {"pll", "shot_noise", &pll.shot_noise},
      {"pll", "scan_step", &pll.scan_step},
      {"pll", "reacquire_timeout", &pll.reacquire_timeout},
      {"pll", "disturbance_rate", &pll.disturbance_rate},
      {"pll", "disturbance_jump", &pll.disturbance_jump},
      {"pll", "static_phase_error", &pll.static_phase_error},
      {"security", "n_z_block", &sec.n_z_block},
      {"security", "eps_sec", &sec.eps_sec},
      {"security", "eps_cor", &sec.eps_cor},
      {"security", "f_ec", &sec.f_ec},
      {"security", "d", &sec.d},
      {"security", "asymptotic", &sec.asymptotic},
      {"security", "qber_combination", &sec.qber_combination},
      {"run", "mode", &c.mode},
      {"run", "seed", &c.seed},
      {"run", "pulses", &c.pulses},
      {"run", "duration", &c.duration},
  };
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Removes a trailing comment that is not inside a quoted string.
inline std::string_view strip_comment(std::string_view s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

inline double parse_double(std::string_view v) {
  std::string s(v);
  std::erase(s, '_');
  if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw std::invalid_argument("expected a number, got '" + std::string(v) + "'");
  return out;
}

template <typename Int>
Int parse_integer(std::string_view v) {
  const double d = parse_double(v);
  if (!std::isfinite(d) || d != std::floor(d) ||
      d < static_cast<double>(std::numeric_limits<Int>::min()) ||
      d > static_cast<double>(std::numeric_limits<Int>::max()))
    throw std::invalid_argument("expected an integer, got '" + std::string(v) + "'");
  return static_cast<Int>(d);
}

inline std::string parse_string(std::string_view v) {
  if (v.size() < 2 || v.front() != '"' || v.back() != '"')
    throw std::invalid_argument("expected a quoted string, got '" + std::string(v) + "'");
  return std::string(v.substr(1, v.size() - 2));
}

inline void assign(const FieldRef& ref, std::string_view value) {
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, double>) {
          *p = parse_double(value);
        } else if constexpr (std::is_same_v<T, bool>) {
          if (value == "true") *p = true;
          else if (value == "false") *p = false;
          else throw std::invalid_argument("expected true or false, got '" + std::string(value) + "'");
        } else if constexpr (std::is_same_v<T, RunMode>) {
          const auto s = parse_string(value);
          if (s == "analytic") *p = RunMode::analytic;
          else if (s == "montecarlo") *p = RunMode::montecarlo;
          else throw std::invalid_argument("mode must be \"analytic\" or \"montecarlo\"");
        } else if constexpr (std::is_same_v<T, QberCombination>) {
          const auto s = parse_string(value);
          if (s == "detection_weighted") *p = QberCombination::detection_weighted;
          else if (s == "worst_case") *p = QberCombination::worst_case;
          else throw std::invalid_argument(
              "qber_combination must be \"detection_weighted\" or \"worst_case\"");
        } else {
          *p = parse_integer<T>(value);
        }
      },
      ref);
}

inline std::string format_value(const FieldRef& ref) {
  return std::visit(
      [](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, double>) {
          char buf[32];
          std::snprintf(buf, sizeof buf, "%.17g", *p);
          return buf;
        } else if constexpr (std::is_same_v<T, bool>) {
          return *p ? "true" : "false";
        } else if constexpr (std::is_same_v<T, RunMode> || std::is_same_v<T, QberCombination>) {
          return std::string("\"") + to_string(*p) + "\"";
        } else {
          return std::to_string(*p);
        }
      },
      ref);
}

}  // namespace detail

// Parses config text over the defaults. `source` names the input in
// diagnostics. Unknown sections and keys are errors.
inline ExperimentConfig parse_config(std::string_view text, const std::string& source = "config") {
  ExperimentConfig config;
  auto fields = detail::config_fields(config);
  std::string section;
  int line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::trim(detail::strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(source, line_no, "", "unterminated section header");
      section = std::string(detail::trim(line.substr(1, line.size() - 2)));
      bool known = false;
      for (const auto& f : fields) known |= section == f.section;
      if (!known) throw ConfigError(source, line_no, section, "unknown section");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(source, line_no, "", "expected 'key = value'");
    const std::string key(detail::trim(line.substr(0, eq)));
    const auto value = detail::trim(line.substr(eq + 1));
    const std::string name = section.empty() ? key : section + "." + key;
    if (section.empty()) throw ConfigError(source, line_no, name, "key outside of any section");
    const detail::Field* field = nullptr;
    for (const auto& f : fields)
      if (section == f.section && key == f.key) field = &f;
    if (!field) throw ConfigError(source, line_no, name, "unknown key");
    try {
      detail::assign(field->ref, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(source, line_no, name, e.what());
    }
  }
  config.link.dimension = config.security.d;
  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source, 0, "", e.what());
  }
  return config;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, 0, "", "cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

// Canonical text form: every field, fixed order, full precision. Parsing the
// dump reproduces the configuration exactly.
inline std::string dump_config(const ExperimentConfig& config) {
  ExperimentConfig copy = config;
  std::string out;
  std::string section;
  for (const auto& f : detail::config_fields(copy)) {
    if (section != f.section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += std::string(f.key) + " = " + detail::format_value(f.ref) + "\n";
  }
  return out;
}

// 64-bit FNV-1a of the canonical dump, as 16 hex digits.
inline std::string config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : dump_config(config)) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace mcfqkd
