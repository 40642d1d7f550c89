#pragma once

// Maximum-likelihood refinement of (R, T) under Gaussian range noise.
//
// The negative log-likelihood reduces to f(R, T) = sum_k (z_k - |e_k|)^2
// with e_k = R y_k + T - x_k. It is minimized by a discretized gradient flow
// on SO(3) x R^3: the Euclidean gradient in R is projected onto the tangent
// space at R, a step is taken along the negative projected gradient, and the
// Procrustes projection maps the update back onto SO(3).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string_view>
#include <tuple>
#include <vector>

#include "rangeloc/errors.hpp"
#include "rangeloc/geometry.hpp"
#include "rangeloc/procrustes.hpp"

namespace rangeloc {

struct MleObjective {
  std::vector<Measurement> measurements;
  /// Range noise standard deviation (meters). Only the likelihood value
  /// depends on it.
  double sigma = 1.0;
};

namespace detail {

inline double sum_squared_residuals(const Matrix3& r, const Point3& t,
                                    std::span<const Measurement> ms) {
  double f = 0.0;
  for (const auto& m : ms) {
    const double res = m.distance - (r * m.p_local + t - m.p_ref).norm();
    f += res * res;
  }
  return f;
}

inline double min_range(const Matrix3& r, const Point3& t,
                        std::span<const Measurement> ms) {
  double out = std::numeric_limits<double>::infinity();
  for (const auto& m : ms) {
    out = std::min(out, (r * m.p_local + t - m.p_ref).norm());
  }
  return out;
}

inline Matrix3 skew(const Point3& v) {
  Matrix3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

/// Fisher-scoring step in tangent coordinates R (I + [w]x), T + dT, with the
/// information matrix's diagonal inflated by (1 + damping). Returns
/// the direction as an ambient tangent matrix R [w]x, the translation part
/// and the directional derivative of f along it.
inline std::tuple<Matrix3, Point3, double> fisher_direction(
    const Matrix3& r, const Point3& t, std::span<const Measurement> ms,
    double damping = 0.0) {
  using Vec6 = Eigen::Matrix<double, 6, 1>;
  using Mat6 = Eigen::Matrix<double, 6, 6>;
  Mat6 info = Mat6::Zero();
  Vec6 grad = Vec6::Zero();
  for (const auto& m : ms) {
    const Point3 e = r * m.p_local + t - m.p_ref;
    const double len = e.norm();
    const Point3 u = e / len;
    Vec6 j;
    j.head<3>() = -(u.transpose() * r * skew(m.p_local)).transpose();
    j.tail<3>() = u;
    grad -= 2.0 * (m.distance - len) * j;
    info += 2.0 * j * j.transpose();
  }
  const Vec6 diag = info.diagonal();
  info.diagonal() += damping * diag;
  info.diagonal().array() += 1e-12 * std::max(info.trace(), 1e-300);
  const Vec6 d = -info.ldlt().solve(grad);
  return {r * skew(d.head<3>()), d.tail<3>(), grad.dot(d)};
}

}  // namespace detail

inline double objective(const Rotation& r, const Point3& t,
                        const MleObjective& obj) {
  return detail::sum_squared_residuals(r.matrix(), t, obj.measurements);
}

/// Gaussian log-likelihood with the N-fold normalization constant.
inline double log_likelihood(const Rotation& r, const Point3& t,
                             const MleObjective& obj) {
  if (!(obj.sigma > 0) || !std::isfinite(obj.sigma)) {
    throw Error(ErrorKind::kInvalidSigma, "sigma must be positive and finite");
  }
  const double n = static_cast<double>(obj.measurements.size());
  const double f = objective(r, t, obj);
  return -f / (2.0 * obj.sigma * obj.sigma) -
         n * std::log(obj.sigma * std::sqrt(2.0 * std::numbers::pi));
}

struct EuclideanGradient {
  Matrix3 d_rotation = Matrix3::Zero();
  Point3 d_translation = Point3::Zero();
};

/// Gradient of f with respect to the nine entries of R (treated as a free
/// matrix) and to T.
inline EuclideanGradient euclidean_gradients(const Matrix3& r, const Point3& t,
                                             std::span<const Measurement> ms,
                                             double eps_range = 1e-9) {
  EuclideanGradient g;
  for (const auto& m : ms) {
    const Point3 e = r * m.p_local + t - m.p_ref;
    const double len = e.norm();
    if (len < eps_range) {
      throw Error(ErrorKind::kDegenerateRange,
                  "predicted range vanishes; gradient direction undefined");
    }
    const double rho = m.distance - len;
    const Point3 w = (-2.0 * rho / len) * e;
    g.d_rotation += w * m.p_local.transpose();
    g.d_translation += w;
  }
  return g;
}

inline EuclideanGradient euclidean_gradients(const Rotation& r, const Point3& t,
                                             const MleObjective& obj,
                                             double eps_range = 1e-9) {
  return euclidean_gradients(r.matrix(), t, obj.measurements, eps_range);
}

/// Projection of M onto the tangent space of SO(3) at R: M/2 - R M^T R / 2.
inline Matrix3 project_tangent(const Rotation& r, const Matrix3& m) {
  const Matrix3& rm = r.matrix();
  return 0.5 * m - 0.5 * rm * m.transpose() * rm;
}

enum class Termination {
  kGradientTolerance,
  kObjectiveTolerance,
  kLineSearchExhausted,
  kMaxIterations,
};

inline std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::kGradientTolerance: return "gradient_tolerance";
    case Termination::kObjectiveTolerance: return "objective_tolerance";
    case Termination::kLineSearchExhausted: return "line_search_exhausted";
    case Termination::kMaxIterations: return "max_iterations";
  }
  return "unknown";
}

/// Metric defining the gradient flow on SO(3) x R^3. kEuclidean is the
/// plain embedded metric (steepest descent along -M_T, -df/dT). kFisher uses
/// the Gauss-Newton approximation of the Fisher information in tangent
/// coordinates (Fisher scoring), which has the same stationary points but
/// is insensitive to the poor conditioning typical of range-only geometry.
enum class RefineMetric { kEuclidean, kFisher };

struct RefineOptions {
  /// Stationarity threshold on |M_T|_F + |dT| in normalized units, per
  /// measurement.
  double gtol = 1e-10;
  /// Stop once one step lowers the objective by less than ftol relative.
  double ftol = 1e-14;
  int max_iters = 5000;
  double initial_step = 1.0;
  RefineMetric metric = RefineMetric::kFisher;
  /// Fisher metric only: relative inflation of the information diagonal,
  /// reduced after full steps and raised after backtracking.
  double initial_damping = 1e-3;
  /// Euclidean metric only: seed each line search with the Barzilai-Borwein
  /// step length instead of initial_step (from the second iteration on).
  bool barzilai_borwein = true;
  double shrink = 0.5;
  double armijo_slope = 1e-4;
  int max_backtracks = 60;
  double eps_range = 1e-9;
};

struct RefinementTrace {
  /// Objective (original units) before the first step and after each step.
  std::vector<double> objective;
  std::vector<double> step;
  /// |M_T|_F + |dT| at each iterate, in normalized units.
  std::vector<double> gradient_norm;
  Termination termination = Termination::kMaxIterations;
  int iterations = 0;
  bool under_determined = false;
};

struct RefineResult {
  Rotation rotation;
  Point3 translation = Point3::Zero();
  RefinementTrace trace;
};

/// Descends f from (R0, T0). Internally both point sets are centered and
/// scaled to unit spread so that rotation and translation steps have
/// comparable curvature; results are mapped back to the caller's frames.
inline RefineResult refine(const Rotation& r0, const Point3& t0,
                           const MleObjective& obj,
                           const RefineOptions& opts = {}) {
  const auto& ms = obj.measurements;
  if (ms.empty()) {
    throw Error(ErrorKind::kEmptyMeasurements, "nothing to refine against");
  }
  const double n = static_cast<double>(ms.size());

  Point3 c_ref = Point3::Zero(), c_loc = Point3::Zero();
  for (const auto& m : ms) {
    c_ref += m.p_ref;
    c_loc += m.p_local;
  }
  c_ref /= n;
  c_loc /= n;
  double spread = 0.0, dist = 0.0;
  for (const auto& m : ms) {
    spread += (m.p_local - c_loc).squaredNorm();
    dist += m.distance * m.distance;
  }
  double scale = std::sqrt(spread / n);
  if (!(scale > 0)) scale = std::sqrt(dist / n);
  if (!(scale > 0)) scale = 1.0;

  std::vector<Measurement> work(ms.begin(), ms.end());
  for (auto& m : work) {
    m.p_ref = (m.p_ref - c_ref) / scale;
    m.p_local = (m.p_local - c_loc) / scale;
    m.distance /= scale;
  }
  const double s2 = scale * scale;

  Matrix3 r = r0.matrix();
  Point3 t = (t0 + r * c_loc - c_ref) / scale;
  double f = detail::sum_squared_residuals(r, t, work);

  RefineResult out;
  out.trace.under_determined = ms.size() < 7;
  out.trace.objective.push_back(f * s2);
  const double gtol = opts.gtol * n;
  double damping = opts.initial_damping;
  Matrix3 r_prev = r, mt_prev = Matrix3::Zero();
  Point3 t_prev = t, gt_prev = Point3::Zero();

  for (int iter = 0;; ++iter) {
    const EuclideanGradient g = euclidean_gradients(r, t, work, opts.eps_range / scale);
    const Matrix3 mt =
        project_tangent(Rotation::from_matrix(r, 1e-6), g.d_rotation);
    const double gnorm = mt.norm() + g.d_translation.norm();
    out.trace.gradient_norm.push_back(gnorm);
    out.trace.iterations = iter;
    if (gnorm <= gtol) {
      out.trace.termination = Termination::kGradientTolerance;
      break;
    }
    if (iter >= opts.max_iters) {
      out.trace.termination = Termination::kMaxIterations;
      break;
    }

    Matrix3 dir_r;
    Point3 dir_t;
    double slope;  // directional derivative along (dir_r, dir_t), < 0
    double alpha = opts.initial_step;
    if (opts.metric == RefineMetric::kFisher) {
      std::tie(dir_r, dir_t, slope) =
          detail::fisher_direction(r, t, work, damping);
    } else {
      dir_r = -mt;
      dir_t = -g.d_translation;
      slope = -(mt.squaredNorm() + g.d_translation.squaredNorm());
      if (opts.barzilai_borwein && iter > 0) {
        const double sy = (r - r_prev).cwiseProduct(mt - mt_prev).sum() +
                          (t - t_prev).dot(g.d_translation - gt_prev);
        const double ss =
            (r - r_prev).squaredNorm() + (t - t_prev).squaredNorm();
        if (sy > 0 && ss > 0) alpha = std::clamp(ss / sy, 1e-12, 1e12);
      }
      r_prev = r;
      t_prev = t;
      mt_prev = mt;
      gt_prev = g.d_translation;
    }
    if (!(slope < 0)) {
      out.trace.termination = Termination::kLineSearchExhausted;
      break;
    }

    bool accepted = false;
    int backtracks = 0;
    Matrix3 r_new;
    Point3 t_new;
    double f_new = f;
    for (; backtracks < opts.max_backtracks;
         ++backtracks, alpha *= opts.shrink) {
      r_new = nearest_rotation(r + alpha * dir_r).rotation.matrix();
      t_new = t + alpha * dir_t;
      if (detail::min_range(r_new, t_new, work) < opts.eps_range / scale) {
        continue;
      }
      f_new = detail::sum_squared_residuals(r_new, t_new, work);
      if (f_new <= f + opts.armijo_slope * alpha * slope) {
        accepted = true;
        break;
      }
    }
    if (opts.metric == RefineMetric::kFisher) {
      damping = backtracks == 0 ? damping / 3.0
                                : std::max(damping, 1e-6) * 4.0;
      damping = std::clamp(damping, 0.0, 1e12);
    }
    if (!accepted) {
      out.trace.termination = Termination::kLineSearchExhausted;
      break;
    }
    const double decrease = f - f_new;
    r = r_new;
    t = t_new;
    f = f_new;
    out.trace.objective.push_back(f * s2);
    out.trace.step.push_back(alpha);
    if (decrease <= opts.ftol * f) {
      out.trace.iterations = iter + 1;
      out.trace.termination = Termination::kObjectiveTolerance;
      break;
    }
  }

  out.rotation = Rotation::from_matrix(r);
  out.translation = scale * t - r * c_loc + c_ref;
  return out;
}

}  // namespace rangeloc
