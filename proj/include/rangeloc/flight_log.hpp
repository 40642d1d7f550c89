#pragma once

// Flight-log CSV ingestion. One header row, then eight numeric columns:
// time,ref_x,ref_y,ref_z,local_x,local_y,local_z,distance

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rangeloc/errors.hpp"
#include "rangeloc/geometry.hpp"

namespace rangeloc {

inline constexpr std::string_view kFlightLogHeader =
    "time,ref_x,ref_y,ref_z,local_x,local_y,local_z,distance";

struct FlightLog {
  std::vector<Measurement> rows;

  bool operator==(const FlightLog&) const = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline double parse_number(std::string_view field, std::size_t row,
                           std::size_t col) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() ||
      field.empty()) {
    throw Error(ErrorKind::kParseError,
                "row " + std::to_string(row) + ", column " +
                    std::to_string(col) + ": not a number '" +
                    std::string(field) + "'");
  }
  return v;
}

}  // namespace detail

/// Shortest decimal text that parses back to the same double.
inline std::string format_number(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// Rows are numbered from 1 after the header; blank lines are skipped.
inline FlightLog parse_flight_csv(std::istream& in) {
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!detail::trim(line).empty()) {
      have_header = true;
      break;
    }
  }
  if (!have_header) throw Error(ErrorKind::kEmptyFile, "no header row");

  FlightLog log;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (;;) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != 8) {
      throw Error(ErrorKind::kParseError,
                  "row " + std::to_string(row) + ": expected 8 columns, got " +
                      std::to_string(fields.size()));
    }
    double v[8];
    for (std::size_t c = 0; c < 8; ++c) {
      v[c] = detail::parse_number(fields[c], row, c + 1);
    }
    Measurement m{v[0], {v[1], v[2], v[3]}, {v[4], v[5], v[6]}, v[7]};
    if (!log.rows.empty() && !(m.time > log.rows.back().time)) {
      throw Error(ErrorKind::kNonMonotonicTime,
                  "row " + std::to_string(row) + ": time " +
                      std::to_string(m.time) + " does not increase");
    }
    log.rows.push_back(m);
  }
  if (log.rows.empty()) throw Error(ErrorKind::kEmptyFile, "no data rows");
  return log;
}

inline FlightLog parse_flight_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_flight_csv(in);
}

inline void write_flight_csv(std::ostream& os,
                             const std::vector<Measurement>& rows) {
  os << kFlightLogHeader << '\n';
  for (const auto& m : rows) {
    os << format_number(m.time);
    for (const Point3* p : {&m.p_ref, &m.p_local}) {
      for (int i = 0; i < 3; ++i) os << ',' << format_number((*p)[i]);
    }
    os << ',' << format_number(m.distance) << '\n';
  }
}

}  // namespace rangeloc
