#pragma once

// Lifted least-squares formulation of the range equations and its
// semidefinite relaxation.
//
// Each squared range expands into a linear equation in the 16 lifted
// unknowns theta (see ThetaVector). With x = [theta; -1] the residual of all
// N equations is [A b] x, so the least-squares cost is <P, x x^T> with
// P = [A b]^T [A b]. The quadratic constraints C1..C14 tying theta together
// are linear in X = x x^T; dropping rank(X) = 1 leaves an SDP.

#include <Eigen/Dense>

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rangeloc/errors.hpp"
#include "rangeloc/geometry.hpp"
#include "rangeloc/sdp_solver.hpp"

namespace rangeloc {

inline constexpr int kLiftedDim = 17;
inline constexpr int kCorner = 16;
inline constexpr int kMinGenericMeasurements = 7;

using Matrix17 = Eigen::Matrix<double, kLiftedDim, kLiftedDim>;
using Vector17 = Eigen::Matrix<double, kLiftedDim, 1>;

struct LinearSystem {
  Eigen::MatrixXd A;  // N x 16
  Eigen::VectorXd b;  // N
  Matrix17 P = Matrix17::Zero();
  /// Typical magnitude of lengths in the data (meters), used to balance the
  /// lifted variables before solving.
  double length_scale = 1.0;

  int num_measurements() const { return static_cast<int>(A.rows()); }
};

struct LinearConstraint {
  Matrix17 Q = Matrix17::Zero();
  double rhs = 0.0;
  std::string label;
};

/// Equalities <Q, X> = rhs and inequalities <Q, X> <= rhs.
struct ConstraintSet {
  std::vector<LinearConstraint> equalities;
  std::vector<LinearConstraint> inequalities;
};

/// Row A[k] and right-hand side b[k] of one measurement.
inline std::pair<Eigen::Matrix<double, 1, 16>, double> assemble_row(
    const Measurement& m) {
  const Point3& x = m.p_ref;
  const Point3& y = m.p_local;
  Eigen::Matrix<double, 1, 16> row;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) row[3 * i + j] = -2.0 * x[i] * y[j];
  }
  row.segment<3>(9) = -2.0 * x.transpose();
  row.segment<3>(12) = 2.0 * y.transpose();
  row[15] = 1.0;
  const double rhs =
      m.distance * m.distance - x.squaredNorm() - y.squaredNorm();
  return {row, rhs};
}

inline LinearSystem assemble_system(std::span<const Measurement> ms) {
  if (ms.empty()) {
    throw Error(ErrorKind::kEmptyMeasurements, "no measurements to assemble");
  }
  const int n = static_cast<int>(ms.size());
  LinearSystem sys;
  sys.A.resize(n, 16);
  sys.b.resize(n);
  double sum_d = 0, sum_ref = 0, sum_loc = 0;
  for (int k = 0; k < n; ++k) {
    auto [row, rhs] = assemble_row(ms[k]);
    sys.A.row(k) = row;
    sys.b[k] = rhs;
    sum_d += ms[k].distance * ms[k].distance;
    sum_ref += ms[k].p_ref.squaredNorm();
    sum_loc += ms[k].p_local.squaredNorm();
  }
  Eigen::MatrixXd ab(n, kLiftedDim);
  ab << sys.A, sys.b;
  sys.P = ab.transpose() * ab;
  sys.P = (0.5 * (sys.P + sys.P.transpose())).eval();
  const double scale =
      std::sqrt(std::max({sum_d, sum_ref, sum_loc}) / static_cast<double>(n));
  sys.length_scale = scale > 0 ? scale : 1.0;
  return sys;
}

/// Diagonal congruence d with X = diag(d) Xs diag(d), balancing the lifted
/// entries: rotation ~ 1, translation and R^T T ~ s, |T|^2 ~ s^2.
inline Vector17 lifted_scaling(double length_scale) {
  const double s = length_scale > 0 ? length_scale : 1.0;
  Vector17 d;
  d.segment<9>(0).setOnes();
  d.segment<6>(9).setConstant(s);
  d[15] = s * s;
  d[kCorner] = 1.0;
  return d;
}

namespace detail {

// Helpers writing polynomial terms of theta into Q so that
// <Q, [theta; -1][theta; -1]^T> - rhs reproduces the polynomial.
struct QuadraticForm {
  LinearConstraint c;

  QuadraticForm& quad(int a, int b, double coef = 1.0) {
    if (a == b) {
      c.Q(a, a) += coef;
    } else {
      c.Q(a, b) += 0.5 * coef;
      c.Q(b, a) += 0.5 * coef;
    }
    return *this;
  }
  // theta_a = -X(a, 17).
  QuadraticForm& linear(int a, double coef = 1.0) {
    c.Q(a, kCorner) -= 0.5 * coef;
    c.Q(kCorner, a) -= 0.5 * coef;
    return *this;
  }
  QuadraticForm& constant(double v) {
    c.rhs -= v;
    return *this;
  }
  LinearConstraint done(std::string label) {
    c.label = std::move(label);
    return c;
  }
};

inline QuadraticForm sum_of_products(int a0, int b0, int a1, int b1, int a2,
                                     int b2) {
  QuadraticForm f;
  f.quad(a0, b0).quad(a1, b1).quad(a2, b2);
  return f;
}

}  // namespace detail

/// C1..C10, optionally C11..C14, then the corner X(17,17) = 1. With
/// `include_rlt`, adds |X(a,17)| <= 1 and X(a,a) <= 1 for the rotation
/// entries.
inline ConstraintSet constraint_matrices(bool include_redundant = true,
                                         bool include_rlt = false) {
  using detail::sum_of_products;
  ConstraintSet set;
  auto& eq = set.equalities;
  eq.push_back(sum_of_products(0, 0, 1, 1, 2, 2).constant(-1).done("C1"));
  eq.push_back(sum_of_products(3, 3, 4, 4, 5, 5).constant(-1).done("C2"));
  eq.push_back(sum_of_products(6, 6, 7, 7, 8, 8).constant(-1).done("C3"));
  eq.push_back(sum_of_products(0, 0, 3, 3, 6, 6).constant(-1).done("C4"));
  eq.push_back(sum_of_products(1, 1, 4, 4, 7, 7).constant(-1).done("C5"));
  eq.push_back(sum_of_products(0, 1, 3, 4, 6, 7).done("C6"));
  eq.push_back(sum_of_products(0, 9, 3, 10, 6, 11).linear(12, -1).done("C7"));
  eq.push_back(sum_of_products(1, 9, 4, 10, 7, 11).linear(13, -1).done("C8"));
  eq.push_back(sum_of_products(9, 9, 10, 10, 11, 11).linear(15, -1).done("C9"));
  eq.push_back(
      sum_of_products(12, 12, 13, 13, 14, 14).linear(15, -1).done("C10"));
  if (include_redundant) {
    eq.push_back(sum_of_products(2, 2, 5, 5, 8, 8).constant(-1).done("C11"));
    eq.push_back(sum_of_products(0, 2, 3, 5, 6, 8).done("C12"));
    eq.push_back(sum_of_products(1, 2, 4, 5, 7, 8).done("C13"));
    eq.push_back(
        sum_of_products(2, 9, 5, 10, 8, 11).linear(14, -1).done("C14"));
  }
  LinearConstraint corner;
  corner.Q(kCorner, kCorner) = 1.0;
  corner.rhs = 1.0;
  corner.label = "corner";
  eq.push_back(corner);

  if (include_rlt) {
    for (int a = 0; a < 9; ++a) {
      const std::string id = std::to_string(a + 1);
      LinearConstraint upper, lower, diag;
      upper.Q(a, kCorner) = upper.Q(kCorner, a) = 0.5;
      upper.rhs = 1.0;
      upper.label = "rlt_upper_" + id;
      lower.Q(a, kCorner) = lower.Q(kCorner, a) = -0.5;
      lower.rhs = 1.0;
      lower.label = "rlt_lower_" + id;
      diag.Q(a, a) = 1.0;
      diag.rhs = 1.0;
      diag.label = "rlt_square_" + id;
      set.inequalities.push_back(upper);
      set.inequalities.push_back(lower);
      set.inequalities.push_back(diag);
    }
  }
  return set;
}

/// Lift of theta: [theta; -1][theta; -1]^T.
inline Matrix17 lift(const ThetaVector& theta) {
  Vector17 x;
  x << theta.values, -1.0;
  return x * x.transpose();
}

inline constexpr double kSvRatioCap = 1e16;

struct Rank1Estimate {
  ThetaVector theta;
  double sv_ratio = 0.0;
};

/// Best rank-1 approximation of X (leading singular pair), normalized so the
/// corner entry of the factor is -1. When `scaling` is given, the
/// decomposition is taken on diag(scaling)^-1 X diag(scaling)^-1 and the
/// result mapped back; sv_ratio then refers to the balanced matrix.
inline Rank1Estimate extract_rank1(const Matrix17& X,
                                   const Vector17& scaling = Vector17::Ones(),
                                   double eps_corner = 1e-6) {
  const Vector17 inv = scaling.cwiseInverse();
  const Matrix17 xs = inv.asDiagonal() * X * inv.asDiagonal();
  Eigen::JacobiSVD<Matrix17> svd(xs, Eigen::ComputeFullU);
  const auto& sv = svd.singularValues();
  Vector17 x = std::sqrt(sv[0]) * svd.matrixU().col(0);
  if (!(std::abs(x[kCorner]) >= eps_corner)) {
    throw Error(ErrorKind::kDegenerateSpectrum,
                "leading singular vector has a vanishing corner entry");
  }
  x *= -1.0 / x[kCorner];
  x = x.cwiseProduct(scaling);
  Rank1Estimate out;
  out.theta.values = x.head<16>();
  out.sv_ratio =
      sv[1] <= sv[0] / kSvRatioCap ? kSvRatioCap : sv[0] / sv[1];
  return out;
}

struct RankDiagnostic {
  int rank = 0;
  double condition = 0.0;
  std::vector<double> singular_values;  // of the balanced P, descending
};

/// Numerical rank of P at threshold rank_tol * sigma_max, computed on the
/// balanced system [A b] diag(d) so that meters and squared meters do not
/// distort the count.
inline RankDiagnostic rank_diagnostic(const LinearSystem& sys,
                                      double rank_tol = 1e-8) {
  const int n = sys.num_measurements();
  const Vector17 d = lifted_scaling(sys.length_scale);
  Eigen::MatrixXd ab(n, kLiftedDim);
  ab << sys.A, sys.b;
  ab = ab * d.asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(ab);
  RankDiagnostic diag;
  const auto& sv = svd.singularValues();
  for (int i = 0; i < sv.size(); ++i) diag.singular_values.push_back(sv[i] * sv[i]);
  diag.singular_values.resize(kLiftedDim, 0.0);
  const double smax = diag.singular_values.front();
  if (smax <= 0) return diag;
  double smin = smax;
  for (double s : diag.singular_values) {
    if (s > rank_tol * smax) {
      ++diag.rank;
      smin = s;
    }
  }
  diag.condition = smax / smin;
  return diag;
}

/// Unconstrained lifted least squares (no relaxation); needs rank 16.
inline ThetaVector linear_least_squares(const LinearSystem& sys) {
  ThetaVector theta;
  const Vector17 d = lifted_scaling(sys.length_scale);
  const Eigen::MatrixXd as = sys.A * d.head<16>().asDiagonal();
  theta.values = (as.completeOrthogonalDecomposition().solve(sys.b))
                     .cwiseProduct(d.head<16>());
  return theta;
}

struct SdpOptions {
  double tol_feas = 1e-8;
  double tol_gap = 1e-8;
  int max_iters = 100;
  /// Overrides the system's length scale for variable balancing when > 0.
  double length_scale = 0.0;
};

enum class SdpStatus { kConverged, kMaxIterations };

struct SdpSolution {
  Matrix17 X = Matrix17::Zero();
  /// Balancing used by the solver; pass to extract_rank1.
  Vector17 scaling = Vector17::Ones();
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  double sv_ratio = 0.0;
  SdpStatus status = SdpStatus::kConverged;
  std::vector<IpmIterate> trace;
  /// True when fewer than 7 measurements were supplied.
  bool under_determined = false;
};

/// Solves min <P, X> over the constraint set with X psd. The cost is
/// balanced by the lifted scaling and normalized by its trace; every
/// constraint row is normalized to unit Frobenius norm. Residuals in the
/// solution refer to that working problem.
inline SdpSolution solve_sdp(const LinearSystem& sys, const ConstraintSet& cons,
                             const SdpOptions& opts = {}) {
  const double s = opts.length_scale > 0 ? opts.length_scale : sys.length_scale;
  const Vector17 d = lifted_scaling(s);
  const auto dd = d.asDiagonal();

  Matrix17 cost = dd * sys.P * dd;
  const double tr = cost.trace();
  if (tr > 0) cost /= tr;

  auto scaled_rows = [&](const std::vector<LinearConstraint>& list,
                         std::vector<Eigen::MatrixXd>& mats,
                         Eigen::VectorXd& rhs) {
    rhs.resize(static_cast<Eigen::Index>(list.size()));
    for (std::size_t i = 0; i < list.size(); ++i) {
      Matrix17 q = dd * list[i].Q * dd;
      const double nrm = q.norm();
      if (nrm == 0) {
        throw Error(ErrorKind::kInvalidArgument,
                    "zero constraint matrix " + list[i].label);
      }
      mats.emplace_back(q / nrm);
      rhs[static_cast<Eigen::Index>(i)] = list[i].rhs / nrm;
    }
  };
  std::vector<Eigen::MatrixXd> eq, in;
  Eigen::VectorXd eq_rhs, in_rhs;
  scaled_rows(cons.equalities, eq, eq_rhs);
  scaled_rows(cons.inequalities, in, in_rhs);

  DenseSdpSolver solver(cost, std::move(eq), eq_rhs, std::move(in), in_rhs);
  IpmOptions ipm;
  ipm.tol_feas = opts.tol_feas;
  ipm.tol_gap = opts.tol_gap;
  ipm.max_iters = opts.max_iters;
  const IpmResult res = solver.solve(ipm);

  if (res.status != IpmStatus::kConverged &&
      res.primal_infeasibility > 1e-4) {
    throw Error(ErrorKind::kInfeasible,
                "equality residual stuck at " +
                    std::to_string(res.primal_infeasibility));
  }

  SdpSolution sol;
  const Matrix17 xs = res.X;
  sol.X = dd * xs * dd;
  sol.scaling = d;
  sol.iterations = res.iterations;
  sol.primal_residual = res.primal_infeasibility;
  sol.dual_residual = res.dual_infeasibility;
  sol.gap = res.relative_gap;
  sol.status = res.status == IpmStatus::kConverged ? SdpStatus::kConverged
                                                   : SdpStatus::kMaxIterations;
  sol.trace = res.trace;
  sol.under_determined = sys.num_measurements() < kMinGenericMeasurements;
  Eigen::JacobiSVD<Matrix17> svd(xs);
  const auto& sv = svd.singularValues();
  sol.sv_ratio = sv[1] <= sv[0] / kSvRatioCap ? kSvRatioCap : sv[0] / sv[1];
  return sol;
}

/// Plain-text dump of the working data for cross-checking with external SDP
/// tools:
///
///   rangeloc-sdp 1
///   dim 17
///   cost
///   <17 rows of 17 numbers>          (P, unscaled)
///   equality <label> <rhs>
///   <17 rows>
///   inequality <label> <rhs>          (meaning <Q, X> <= rhs)
///   <17 rows>
///   end
inline void write_sdp_problem(std::ostream& os, const LinearSystem& sys,
                              const ConstraintSet& cons) {
  const auto old_prec = os.precision(17);
  auto matrix = [&](const Matrix17& m) {
    for (int i = 0; i < kLiftedDim; ++i) {
      for (int j = 0; j < kLiftedDim; ++j) os << (j ? " " : "") << m(i, j);
      os << '\n';
    }
  };
  os << "rangeloc-sdp 1\ndim " << kLiftedDim << "\ncost\n";
  matrix(sys.P);
  for (const auto& c : cons.equalities) {
    os << "equality " << c.label << ' ' << c.rhs << '\n';
    matrix(c.Q);
  }
  for (const auto& c : cons.inequalities) {
    os << "inequality " << c.label << ' ' << c.rhs << '\n';
    matrix(c.Q);
  }
  os << "end\n";
  os.precision(old_prec);
}

struct SdpProblemDump {
  Matrix17 P = Matrix17::Zero();
  ConstraintSet constraints;
};

inline SdpProblemDump read_sdp_problem(std::istream& is) {
  auto fail = [](const std::string& what) {
    throw Error(ErrorKind::kParseError, "sdp dump: " + what);
  };
  auto matrix = [&](Matrix17& m) {
    for (int i = 0; i < kLiftedDim; ++i) {
      for (int j = 0; j < kLiftedDim; ++j) {
        if (!(is >> m(i, j))) fail("truncated matrix");
      }
    }
  };
  std::string tag;
  int version = 0, dim = 0;
  if (!(is >> tag >> version) || tag != "rangeloc-sdp" || version != 1) {
    fail("bad header");
  }
  if (!(is >> tag >> dim) || tag != "dim" || dim != kLiftedDim) fail("bad dim");
  if (!(is >> tag) || tag != "cost") fail("missing cost");
  SdpProblemDump out;
  matrix(out.P);
  while (is >> tag) {
    if (tag == "end") return out;
    LinearConstraint c;
    if (!(is >> c.label >> c.rhs)) fail("bad constraint header");
    matrix(c.Q);
    if (tag == "equality") {
      out.constraints.equalities.push_back(std::move(c));
    } else if (tag == "inequality") {
      out.constraints.inequalities.push_back(std::move(c));
    } else {
      fail("unknown section " + tag);
    }
  }
  fail("missing end marker");
  return out;
}

}  // namespace rangeloc
