#pragma once

// End-to-end estimation: lifted least squares -> SDP relaxation -> rank-1
// extraction -> Procrustes -> likelihood refinement, plus the diagnostics
// reported alongside each estimate.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "rangeloc/errors.hpp"
#include "rangeloc/geometry.hpp"
#include "rangeloc/mle.hpp"
#include "rangeloc/procrustes.hpp"
#include "rangeloc/sdp.hpp"

namespace rangeloc {

inline constexpr std::string_view kUnderDeterminedWarning =
    "UnderDeterminedWarning: fewer than 7 measurements; the relaxation may "
    "be far from the ground truth";
inline constexpr std::string_view kRankWarning =
    "RankWarning: coefficient matrix rank below 7; trajectories are "
    "degenerate (e.g. parallel straight lines)";
inline constexpr std::string_view kCoplanarWarning =
    "CoplanarWarning: trajectories are close to coplanar; height is poorly "
    "determined and a mirror solution may exist";

struct PipelineOptions {
  SdpOptions sdp;
  bool use_rlt = false;
  bool include_redundant = true;
  RefineOptions refine;
  /// Gaussian samples drawn from the relaxed moment matrix; each is rounded
  /// to a rotation and the best-scoring ones seed extra refinements.
  int rounding_samples = 256;
  int rounding_refinements = 16;
  std::uint64_t rounding_seed = 0x5eed;
  double rounding_accept_ratio = 0.1;
  double rank_tol = 1e-8;
  /// Planarity ratio (smallest over largest principal spread) below which
  /// a trajectory counts as flat.
  double coplanar_ratio = 0.05;
  /// Condition number of the Fisher information at the estimate (rotation
  /// about the local centroid, angles scaled by the local spread) above
  /// which the geometry counts as ill-conditioned.
  double fisher_condition_limit = 1e6;
};

struct Diagnostics {
  int rank = 0;
  double sv_ratio = 0.0;
  double orth_error = 0.0;
  double objective_before = 0.0;
  double objective_after = 0.0;
  int sdp_iterations = 0;
  int refine_iterations = 0;
  std::string termination;
  double rms_residual = 0.0;
  double planarity_ref = 0.0;
  double planarity_local = 0.0;
  double fisher_condition = 0.0;
  /// Sensitivity of the localized positions to range noise, per global axis
  /// (meters per meter of range noise).
  Point3 position_sensitivity = Point3::Zero();
  std::vector<std::string> warnings;

  bool operator==(const Diagnostics&) const = default;
};

struct EstimationReport {
  Matrix3 sdp_rotation = Matrix3::Zero();  // raw block, not a rotation
  Point3 sdp_translation = Point3::Zero();
  RigidTransform procrustes_estimate;
  RigidTransform mle_estimate;
  Diagnostics diagnostics;
  std::vector<double> times;
  std::vector<Point3> localized_positions;

  bool operator==(const EstimationReport&) const = default;
};

/// Smallest over largest principal standard deviation of a point set.
inline double planarity(std::span<const Point3> pts) {
  if (pts.size() < 2) return 0.0;
  Point3 c = Point3::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  Matrix3 cov = Matrix3::Zero();
  for (const auto& p : pts) cov += (p - c) * (p - c).transpose();
  Eigen::SelfAdjointEigenSolver<Matrix3> es(cov);
  const auto ev = es.eigenvalues().cwiseMax(0.0);
  return ev[2] > 0 ? std::sqrt(ev[0] / ev[2]) : 0.0;
}

namespace detail {

/// 6x6 information matrix of the ranges at unit noise. Rotation is taken
/// about `center` (local frame) and its angle is scaled by `length`, so
/// with center = local centroid and length = local spread both blocks are in
/// meters and the translation block is the mapped centroid itself.
inline Eigen::Matrix<double, 6, 6> range_information(
    const Matrix3& r, const Point3& t, std::span<const Measurement> ms,
    const Point3& center = Point3::Zero(), double length = 1.0) {
  Eigen::Matrix<double, 6, 6> info = Eigen::Matrix<double, 6, 6>::Zero();
  for (const auto& m : ms) {
    const Point3 e = r * m.p_local + t - m.p_ref;
    const double len = e.norm();
    if (len <= 0) continue;
    const Point3 u = e / len;
    Eigen::Matrix<double, 6, 1> j;
    j.head<3>() =
        -(u.transpose() * r * skew((m.p_local - center) / length)).transpose();
    j.tail<3>() = u;
    info += j * j.transpose();
  }
  return info;
}

struct Candidate {
  Matrix3 rotation;
  Point3 translation;
  double objective;
};

/// Randomized rounding of the relaxed solution: draw xi ~ N(0, X) in the
/// balanced coordinates, normalize the corner to -1 and project the rotation
/// block.
inline std::vector<Candidate> rounding_candidates(
    const SdpSolution& sol, std::span<const Measurement> ms, int samples,
    std::uint64_t seed) {
  std::vector<Candidate> out;
  if (samples <= 0) return out;
  const Vector17 inv = sol.scaling.cwiseInverse();
  const Matrix17 xs = inv.asDiagonal() * sol.X * inv.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix17> es(0.5 * (xs + xs.transpose()));
  const Matrix17 factor =
      es.eigenvectors() *
      es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  out.reserve(static_cast<std::size_t>(samples));
  for (int k = 0; k < samples; ++k) {
    Vector17 z;
    for (int i = 0; i < kLiftedDim; ++i) z[i] = gauss(rng);
    Vector17 x = factor * z;
    if (std::abs(x[kCorner]) < 1e-12) continue;
    x = (x * (-1.0 / x[kCorner])).cwiseProduct(sol.scaling);
    ThetaVector theta;
    theta.values = x.head<16>();
    auto [m, t] = unpack_theta(theta);
    if (!m.allFinite() || !t.allFinite()) continue;
    try {
      const Matrix3 r = nearest_rotation(m).rotation.matrix();
      out.push_back({r, t, detail::sum_squared_residuals(r, t, ms)});
    } catch (const Error&) {
      continue;
    }
  }
  return out;
}

}  // namespace detail

/// Runs the full estimation chain on one agent's measurements. Errors from
/// each stage propagate with the stage name prefixed to the message.
inline EstimationReport run_pipeline(std::span<const Measurement> ms,
                                     const PipelineOptions& opts = {}) {
  if (ms.empty()) {
    throw Error(ErrorKind::kEmptyMeasurements, "pipeline: no measurements");
  }
  auto staged = [](const char* stage, auto&& fn) {
    try {
      return fn();
    } catch (const Error& e) {
      throw Error(e.kind(), std::string(stage) + ": " + e.message());
    }
  };

  EstimationReport rep;
  Diagnostics& diag = rep.diagnostics;
  const int n = static_cast<int>(ms.size());
  if (n < kMinGenericMeasurements) {
    diag.warnings.emplace_back(kUnderDeterminedWarning);
  }

  const LinearSystem sys = staged("assemble", [&] { return assemble_system(ms); });
  diag.rank = rank_diagnostic(sys, opts.rank_tol).rank;
  if (diag.rank < std::min(n, kMinGenericMeasurements)) {
    diag.warnings.emplace_back(kRankWarning);
  }

  const SdpSolution sol = staged("sdp", [&] {
    return solve_sdp(sys,
                     constraint_matrices(opts.include_redundant, opts.use_rlt),
                     opts.sdp);
  });
  diag.sdp_iterations = sol.iterations;
  diag.sv_ratio = sol.sv_ratio;

  const Rank1Estimate r1 =
      staged("extract_rank1", [&] { return extract_rank1(sol.X, sol.scaling); });
  std::tie(rep.sdp_rotation, rep.sdp_translation) = unpack_theta(r1.theta);

  const ProcrustesResult pr = staged(
      "procrustes", [&] { return nearest_rotation(rep.sdp_rotation); });
  diag.orth_error = pr.orth_error;
  rep.procrustes_estimate = {pr.rotation, rep.sdp_translation};

  const MleObjective obj{std::vector<Measurement>(ms.begin(), ms.end()), 1.0};
  const double f0 =
      objective(rep.procrustes_estimate.rotation, rep.sdp_translation, obj);
  diag.objective_before = f0;

  // The relaxation's own estimate is always refined. A rounding candidate
  // replaces it only when its refined fit is better by the factor
  // rounding_accept_ratio, i.e. when the relaxation evidently led into a
  // non-global basin.
  std::optional<RefineResult> best;
  std::optional<Error> primary_error;
  try {
    best = refine(pr.rotation, rep.sdp_translation, obj, opts.refine);
  } catch (const Error& e) {
    primary_error = Error(e.kind(), std::string("refine: ") + e.message());
  }
  auto final_objective = [](const RefineResult& r) {
    return r.trace.objective.back();
  };

  auto cands = detail::rounding_candidates(sol, ms, opts.rounding_samples,
                                           opts.rounding_seed);
  const auto keep = std::min<std::size_t>(
      cands.size(), static_cast<std::size_t>(std::max(0, opts.rounding_refinements)));
  std::partial_sort(cands.begin(), cands.begin() + static_cast<long>(keep),
                    cands.end(), [](const auto& a, const auto& b) {
                      return a.objective < b.objective;
                    });
  std::optional<RefineResult> alt_best;
  for (std::size_t k = 0; k < keep; ++k) {
    try {
      RefineResult alt =
          refine(Rotation::from_matrix(cands[k].rotation, 1e-6),
                 cands[k].translation, obj, opts.refine);
      if (!alt_best || final_objective(alt) < final_objective(*alt_best)) {
        alt_best = std::move(alt);
      }
    } catch (const Error&) {
      continue;
    }
  }
  if (alt_best && (!best || final_objective(*alt_best) <
                                opts.rounding_accept_ratio *
                                    final_objective(*best))) {
    best = std::move(alt_best);
  }
  if (!best) throw *primary_error;
  if (final_objective(*best) > f0) {
    // Only reachable when the primary refinement failed.
    best->rotation = pr.rotation;
    best->translation = rep.sdp_translation;
    best->trace = RefinementTrace{};
    best->trace.objective.push_back(f0);
    best->trace.termination = Termination::kLineSearchExhausted;
  }

  rep.mle_estimate = {best->rotation, best->translation};
  diag.objective_after = final_objective(*best);
  diag.refine_iterations = best->trace.iterations;
  diag.termination = std::string(to_string(best->trace.termination));
  diag.rms_residual = std::sqrt(diag.objective_after / n);

  std::vector<Point3> ref_pts, loc_pts;
  for (const auto& m : ms) {
    ref_pts.push_back(m.p_ref);
    loc_pts.push_back(m.p_local);
    rep.times.push_back(m.time);
    rep.localized_positions.push_back(rep.mle_estimate.apply(m.p_local));
  }
  diag.planarity_ref = planarity(ref_pts);
  diag.planarity_local = planarity(loc_pts);

  Point3 c = Point3::Zero();
  for (const auto& p : loc_pts) c += p;
  c /= static_cast<double>(loc_pts.size());
  double spread = 0.0;
  for (const auto& p : loc_pts) spread += (p - c).squaredNorm();
  spread = std::sqrt(spread / static_cast<double>(loc_pts.size()));
  if (!(spread > 0)) spread = 1.0;
  const auto info = detail::range_information(
      best->rotation.matrix(), best->translation, ms, c, spread);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(info);
  const double lmin = es.eigenvalues()[0], lmax = es.eigenvalues()[5];
  diag.fisher_condition =
      lmin > 0 ? lmax / lmin : std::numeric_limits<double>::infinity();
  if (lmin > lmax * 1e-14) {
    // Position covariance of the mapped local centroid, per unit noise.
    const Eigen::Matrix<double, 6, 6> cov = info.inverse();
    diag.position_sensitivity =
        cov.bottomRightCorner<3, 3>().diagonal().cwiseMax(0.0).cwiseSqrt();
  } else {
    diag.position_sensitivity.setConstant(
        std::numeric_limits<double>::infinity());
  }
  if (n >= 3 && (std::max(diag.planarity_ref, diag.planarity_local) <
                     opts.coplanar_ratio ||
                 !(diag.fisher_condition <= opts.fisher_condition_limit))) {
    diag.warnings.emplace_back(kCoplanarWarning);
  }
  return rep;
}

struct StarResult {
  /// Empty when the agent's run failed; see error.
  std::optional<EstimationReport> report;
  std::string error;
  ErrorKind error_kind = ErrorKind::kInvalidArgument;
};

/// One independent two-agent problem per GPS-denied agent. A failure in one
/// agent is recorded in its slot and does not affect the others.
inline std::vector<StarResult> run_star(
    const std::vector<std::vector<Measurement>>& agents,
    const PipelineOptions& opts = {}) {
  std::vector<StarResult> out(agents.size());
  for (std::size_t i = 0; i < agents.size(); ++i) {
    try {
      out[i].report = run_pipeline(agents[i], opts);
    } catch (const Error& e) {
      out[i].error = e.what();
      out[i].error_kind = e.kind();
    }
  }
  return out;
}

}  // namespace rangeloc
