// csv.hpp
// CSV emission and ingestion. Machine output uses shortest round-trip
// formatting; pretty tables use 6 significant digits.

#pragma once

#include <charconv>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "keyrate.hpp"
#include "linksim.hpp"

namespace mcfqkd {

inline std::string format_full(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("format_full: conversion failed");
  return std::string(buf, ptr);
}

inline std::string format_pretty(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

class CsvTable {
public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_comment(const std::string& line) { comments_.push_back(line); }

  void add_row(std::vector<std::string> row) {
    if (row.size() != header_.size())
      throw std::logic_error("CsvTable: row width does not match header");
    rows_.push_back(std::move(row));
  }

  const std::vector<std::string>& header() const { return header_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }

  void write(std::ostream& out) const {
    for (const auto& c : comments_) out << "# " << c << "\n";
    write_row(out, header_);
    for (const auto& r : rows_) write_row(out, r);
  }

  // Space-aligned columns for terminals.
  void write_pretty(std::ostream& out) const {
    std::vector<std::size_t> width(header_.size());
    for (std::size_t i = 0; i < header_.size(); ++i) width[i] = header_[i].size();
    for (const auto& r : rows_)
      for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size(); ++i) {
        if (i) out << "  ";
        out << std::string(width[i] - r[i].size(), ' ') << r[i];
      }
      out << "\n";
    };
    line(header_);
    for (const auto& r : rows_) line(r);
  }

private:
  static void write_row(std::ostream& out, const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }

  std::vector<std::string> header_;
  std::vector<std::string> comments_;
  std::vector<std::vector<std::string>> rows_;
};

inline std::string provenance_comment(const std::string& hash, std::uint64_t seed) {
  return "config_hash=" + hash + " seed=" + std::to_string(seed);
}

// Stable leading columns, then the diagnostic counters.
inline CsvTable tally_table(const Tally& tally) {
  CsvTable t({"basis", "intensity", "n_sent", "n_detected", "m_errors", "elapsed_s", "n_matched",
              "n_double", "n_vacuum_tagged", "n_single_tagged"});
  for (Basis b : all_bases)
    for (Intensity k : all_intensities) {
      const auto& c = tally.cell(b, k);
      t.add_row({to_string(b), to_string(k), std::to_string(c.n_sent),
                 std::to_string(c.n_detected), std::to_string(c.m_errors),
                 format_full(tally.elapsed), std::to_string(c.n_matched),
                 std::to_string(c.n_double), std::to_string(c.n_vacuum_tagged),
                 std::to_string(c.n_single_tagged)});
    }
  return t;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  return out;
}

inline std::int64_t parse_count(const std::string& s, int line, const std::string& column) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v < 0)
    throw std::invalid_argument("tally csv line " + std::to_string(line) + ": column " + column +
                                " is not a non-negative integer: '" + s + "'");
  return v;
}

}  // namespace detail

// Reads the stable columns; extra columns are used when present. Missing
// n_matched defaults to n_sent.
inline Tally read_tally_csv(std::istream& in) {
  Tally tally;
  std::map<std::string, std::size_t> col;
  std::string line;
  int line_no = 0;
  std::array<std::array<bool, 2>, 2> seen{};
  bool elapsed_set = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto cells = detail::split_csv_line(line);
    if (col.empty()) {
      for (std::size_t i = 0; i < cells.size(); ++i) col[cells[i]] = i;
      for (const char* req : {"basis", "intensity", "n_sent", "n_detected", "m_errors", "elapsed_s"})
        if (!col.count(req))
          throw std::invalid_argument(std::string("tally csv: missing column ") + req);
      continue;
    }
    if (cells.size() != col.size())
      throw std::invalid_argument("tally csv line " + std::to_string(line_no) +
                                  ": wrong number of columns");
    auto get = [&](const char* name) { return cells[col.at(name)]; };
    const std::string basis = get("basis"), intensity = get("intensity");
    if (basis != "Z" && basis != "X")
      throw std::invalid_argument("tally csv line " + std::to_string(line_no) + ": bad basis");
    if (intensity != "mu1" && intensity != "mu2")
      throw std::invalid_argument("tally csv line " + std::to_string(line_no) + ": bad intensity");
    const Basis b = basis == "Z" ? Basis::Z : Basis::X;
    const Intensity k = intensity == "mu1" ? Intensity::mu1 : Intensity::mu2;
    auto& seen_cell = seen[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)];
    if (seen_cell)
      throw std::invalid_argument("tally csv line " + std::to_string(line_no) + ": duplicate cell");
    seen_cell = true;
    TallyCell& c = tally.cell(b, k);
    c.n_sent = detail::parse_count(get("n_sent"), line_no, "n_sent");
    c.n_detected = detail::parse_count(get("n_detected"), line_no, "n_detected");
    c.m_errors = detail::parse_count(get("m_errors"), line_no, "m_errors");
    c.n_matched = col.count("n_matched") ? detail::parse_count(get("n_matched"), line_no, "n_matched")
                                         : c.n_sent;
    if (col.count("n_double")) c.n_double = detail::parse_count(get("n_double"), line_no, "n_double");
    if (col.count("n_vacuum_tagged"))
      c.n_vacuum_tagged = detail::parse_count(get("n_vacuum_tagged"), line_no, "n_vacuum_tagged");
    if (col.count("n_single_tagged"))
      c.n_single_tagged = detail::parse_count(get("n_single_tagged"), line_no, "n_single_tagged");
    double elapsed = 0.0;
    const std::string e = get("elapsed_s");
    const auto [ptr, ec] = std::from_chars(e.data(), e.data() + e.size(), elapsed);
    if (ec != std::errc() || ptr != e.data() + e.size() || !(elapsed > 0.0))
      throw std::invalid_argument("tally csv line " + std::to_string(line_no) +
                                  ": elapsed_s must be a positive number");
    if (elapsed_set && elapsed != tally.elapsed)
      throw std::invalid_argument("tally csv: elapsed_s differs between rows");
    tally.elapsed = elapsed;
    elapsed_set = true;
  }
  for (const auto& row : seen)
    for (bool s : row)
      if (!s) throw std::invalid_argument("tally csv: needs one row per basis and intensity");
  if (!tally.consistent()) throw std::invalid_argument("tally csv: counts are inconsistent");
  return tally;
}

// Key-rate result with every intermediate bound, one field per row.
inline CsvTable key_rate_table(const KeyRateResult& r) {
  CsvTable t({"field", "value"});
  const auto& b = r.bounds;
  const std::pair<const char*, double> rows[] = {
      {"ell_bits", r.ell},       {"ell_unclamped_bits", r.ell_unclamped},
      {"r_sk_bits_per_s", r.r_sk}, {"lambda_ec_bits", r.lambda_ec},
      {"block_time_s", r.block_time}, {"n_z", r.n_z},
      {"qber_z", r.qber_z},      {"d0_z", b.d0_z},
      {"d1_z", b.d1_z},          {"phi_z", b.phi_z},
      {"tau0", b.tau0},          {"tau1", b.tau1},
      {"s0_z_upper", b.s0_z_upper}, {"s1_x", b.s1_x},
      {"v1_x", b.v1_x},          {"gamma", b.gamma},
      {"clamped", b.clamped ? 1.0 : 0.0},
  };
  for (const auto& [name, value] : rows) t.add_row({name, format_full(value)});
  return t;
}

}  // namespace mcfqkd
