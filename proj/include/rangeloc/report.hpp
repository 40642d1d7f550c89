#pragma once

// Report serialization. JSON carries the full report and parses back to an
// equal value; CSV carries the localized positions plus a diagnostics
// footer.

#include <json.hpp>

#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>

#include "rangeloc/errors.hpp"
#include "rangeloc/flight_log.hpp"
#include "rangeloc/pipeline.hpp"

namespace rangeloc {

enum class ReportFormat { kJson, kCsv };

namespace detail {

using nlohmann::json;

// JSON has no infinities; non-finite values are written as null.
inline json number(double v) { return std::isfinite(v) ? json(v) : json(); }
inline double number(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity()
                     : j.get<double>();
}

inline json vec(const Point3& p) {
  return json::array({number(p.x()), number(p.y()), number(p.z())});
}
inline Point3 vec(const json& j) {
  return {number(j.at(0)), number(j.at(1)), number(j.at(2))};
}

inline json mat(const Matrix3& m) {
  json rows = json::array();
  for (int i = 0; i < 3; ++i) {
    rows.push_back(json::array({m(i, 0), m(i, 1), m(i, 2)}));
  }
  return rows;
}
inline Matrix3 mat(const json& j) {
  Matrix3 m;
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) m(i, k) = j.at(i).at(k).get<double>();
  }
  return m;
}

inline json transform(const RigidTransform& t) {
  return {{"rotation", mat(t.rotation.matrix())},
          {"translation", vec(t.translation)}};
}
inline RigidTransform transform(const json& j) {
  return {Rotation::from_matrix(mat(j.at("rotation")), 1e-6),
          vec(j.at("translation"))};
}

}  // namespace detail

inline nlohmann::json to_json(const EstimationReport& r) {
  using detail::number;
  using detail::vec;
  const Diagnostics& d = r.diagnostics;
  nlohmann::json positions = nlohmann::json::array();
  for (std::size_t k = 0; k < r.localized_positions.size(); ++k) {
    positions.push_back({{"time", r.times[k]},
                         {"position", vec(r.localized_positions[k])}});
  }
  return {
      {"sdp_estimate",
       {{"rotation_block", detail::mat(r.sdp_rotation)},
        {"translation", vec(r.sdp_translation)}}},
      {"procrustes_estimate", detail::transform(r.procrustes_estimate)},
      {"mle_estimate", detail::transform(r.mle_estimate)},
      {"diagnostics",
       {{"rank", d.rank},
        {"sv_ratio", number(d.sv_ratio)},
        {"orth_error", number(d.orth_error)},
        {"objective_before", number(d.objective_before)},
        {"objective_after", number(d.objective_after)},
        {"sdp_iterations", d.sdp_iterations},
        {"refine_iterations", d.refine_iterations},
        {"termination", d.termination},
        {"rms_residual", number(d.rms_residual)},
        {"planarity_ref", number(d.planarity_ref)},
        {"planarity_local", number(d.planarity_local)},
        {"fisher_condition", number(d.fisher_condition)},
        {"position_sensitivity", vec(d.position_sensitivity)},
        {"warnings", d.warnings}}},
      {"localized_positions", positions},
  };
}

inline EstimationReport report_from_json(const nlohmann::json& j) {
  using detail::number;
  using detail::vec;
  try {
    EstimationReport r;
    r.sdp_rotation = detail::mat(j.at("sdp_estimate").at("rotation_block"));
    r.sdp_translation = vec(j.at("sdp_estimate").at("translation"));
    r.procrustes_estimate = detail::transform(j.at("procrustes_estimate"));
    r.mle_estimate = detail::transform(j.at("mle_estimate"));
    const auto& dj = j.at("diagnostics");
    Diagnostics& d = r.diagnostics;
    d.rank = dj.at("rank").get<int>();
    d.sv_ratio = number(dj.at("sv_ratio"));
    d.orth_error = number(dj.at("orth_error"));
    d.objective_before = number(dj.at("objective_before"));
    d.objective_after = number(dj.at("objective_after"));
    d.sdp_iterations = dj.at("sdp_iterations").get<int>();
    d.refine_iterations = dj.at("refine_iterations").get<int>();
    d.termination = dj.at("termination").get<std::string>();
    d.rms_residual = number(dj.at("rms_residual"));
    d.planarity_ref = number(dj.at("planarity_ref"));
    d.planarity_local = number(dj.at("planarity_local"));
    d.fisher_condition = number(dj.at("fisher_condition"));
    d.position_sensitivity = vec(dj.at("position_sensitivity"));
    d.warnings = dj.at("warnings").get<std::vector<std::string>>();
    for (const auto& p : j.at("localized_positions")) {
      r.times.push_back(p.at("time").get<double>());
      r.localized_positions.push_back(vec(p.at("position")));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParseError, std::string("report: ") + e.what());
  }
}

inline EstimationReport parse_report_json(std::string_view text) {
  try {
    return report_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParseError, std::string("report: ") + e.what());
  }
}

inline void write_report_csv(std::ostream& os, const EstimationReport& r) {
  auto num = [](double v) { return format_number(v); };
  os << "time,x,y,z\n";
  for (std::size_t k = 0; k < r.localized_positions.size(); ++k) {
    const Point3& p = r.localized_positions[k];
    os << num(r.times[k]) << ',' << num(p.x()) << ',' << num(p.y()) << ','
       << num(p.z()) << '\n';
  }
  const Diagnostics& d = r.diagnostics;
  os << "# diagnostics\n"
     << "# rank," << d.rank << '\n'
     << "# sv_ratio," << num(d.sv_ratio) << '\n'
     << "# orth_error," << num(d.orth_error) << '\n'
     << "# objective_before," << num(d.objective_before) << '\n'
     << "# objective_after," << num(d.objective_after) << '\n'
     << "# rms_residual," << num(d.rms_residual) << '\n'
     << "# planarity," << num(d.planarity_ref) << ','
     << num(d.planarity_local) << '\n'
     << "# fisher_condition," << num(d.fisher_condition) << '\n'
     << "# position_sensitivity," << num(d.position_sensitivity.x()) << ','
     << num(d.position_sensitivity.y()) << ','
     << num(d.position_sensitivity.z()) << '\n';
  for (const auto& w : d.warnings) os << "# warning," << w << '\n';
}

inline std::string emit_report(const EstimationReport& r, ReportFormat fmt) {
  if (fmt == ReportFormat::kJson) return to_json(r).dump(2) + "\n";
  std::ostringstream os;
  write_report_csv(os, r);
  return os.str();
}

}  // namespace rangeloc
