#pragma once

// Dense primal-dual interior-point method for one small PSD block plus an
// optional nonnegative slack block:
//
//   min  <C, X>
//   s.t. <A_i, X>        = b_i   (equalities)
//        <G_j, X> + s_j  = h_j   (inequalities <G_j, X> <= h_j)
//        X psd, s >= 0
//
// Infeasible-start path following with the HKM search direction and a
// Mehrotra predictor-corrector. Every Schur complement is formed densely,
// which is the right trade-off for a 17x17 block and a few dozen rows.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "rangeloc/errors.hpp"

namespace rangeloc {

struct IpmOptions {
  double tol_feas = 1e-8;
  double tol_gap = 1e-8;
  int max_iters = 100;
  double step_fraction = 0.95;
  double initial_scale = 1.0;
};

struct IpmIterate {
  double primal_infeasibility = 0.0;
  double dual_infeasibility = 0.0;
  double relative_gap = 0.0;
  double mu = 0.0;
  double primal_step = 0.0;
  double dual_step = 0.0;
};

enum class IpmStatus { kConverged, kMaxIterations, kStalled };

struct IpmResult {
  Eigen::MatrixXd X;
  Eigen::MatrixXd Z;
  Eigen::VectorXd y;
  Eigen::VectorXd slack;
  int iterations = 0;
  double primal_infeasibility = 0.0;
  double dual_infeasibility = 0.0;
  double relative_gap = 0.0;
  IpmStatus status = IpmStatus::kMaxIterations;
  std::vector<IpmIterate> trace;
};

class DenseSdpSolver {
 public:
  DenseSdpSolver(Eigen::MatrixXd cost, std::vector<Eigen::MatrixXd> eq,
                 Eigen::VectorXd eq_rhs, std::vector<Eigen::MatrixXd> ineq,
                 Eigen::VectorXd ineq_rhs)
      : c_(std::move(cost)),
        n_(static_cast<int>(c_.rows())),
        n_eq_(static_cast<int>(eq.size())),
        n_in_(static_cast<int>(ineq.size())) {
    if (c_.rows() != c_.cols()) {
      throw Error(ErrorKind::kInvalidArgument, "cost matrix must be square");
    }
    if (eq_rhs.size() != n_eq_ || ineq_rhs.size() != n_in_) {
      throw Error(ErrorKind::kInvalidArgument, "rhs length mismatch");
    }
    rows_ = std::move(eq);
    rows_.insert(rows_.end(), std::make_move_iterator(ineq.begin()),
                 std::make_move_iterator(ineq.end()));
    for (const auto& a : rows_) {
      if (a.rows() != n_ || a.cols() != n_) {
        throw Error(ErrorKind::kInvalidArgument, "constraint size mismatch");
      }
    }
    rhs_.resize(n_eq_ + n_in_);
    rhs_ << eq_rhs, ineq_rhs;
    check_affine_consistency();
    drop_dependent_equalities();
  }

  int num_rows() const { return n_eq_ + n_in_; }

  /// Throws kInfeasible when the equality rows admit no symmetric solution
  /// at all (linear inconsistency, independent of the cone).
  void check_affine_consistency() const {
    const int m = num_rows();
    if (m == 0) return;
    Eigen::MatrixXd op(m, n_ * n_);
    for (int i = 0; i < m; ++i) {
      op.row(i) = Eigen::Map<const Eigen::VectorXd>(rows_[i].data(), n_ * n_)
                      .transpose();
    }
    // Inequality rows carry their own slack, so only equalities can clash.
    Eigen::MatrixXd eq_op = op.topRows(n_eq_);
    if (n_eq_ == 0) return;
    Eigen::VectorXd x = eq_op.completeOrthogonalDecomposition().solve(
        rhs_.head(n_eq_));
    const double resid = (eq_op * x - rhs_.head(n_eq_)).cwiseAbs().maxCoeff();
    if (!(resid <= 1e-8 * (1.0 + rhs_.head(n_eq_).cwiseAbs().maxCoeff()))) {
      throw Error(ErrorKind::kInfeasible,
                  "equality constraints are linearly inconsistent");
    }
  }

  IpmResult solve(const IpmOptions& opts) const {
    using Eigen::MatrixXd;
    using Eigen::VectorXd;

    const int m = num_rows();
    const double xi = opts.initial_scale;
    MatrixXd X = xi * MatrixXd::Identity(n_, n_);
    MatrixXd Z = xi * MatrixXd::Identity(n_, n_);
    VectorXd y = VectorXd::Zero(m);
    VectorXd s = VectorXd::Constant(n_in_, xi);
    VectorXd z = VectorXd::Constant(n_in_, xi);

    const double c_norm = c_.norm();
    IpmResult best;
    double best_merit = std::numeric_limits<double>::infinity();
    IpmResult out;
    int stalled = 0;

    for (int iter = 0;; ++iter) {
      // Residuals.
      VectorXd rp = rhs_ - apply(X);
      if (n_in_ > 0) rp.tail(n_in_) -= s;
      MatrixXd rd = c_ - Z - adjoint(y);
      VectorXd rl = -z - y.tail(n_in_);

      const double compl_sum = X.cwiseProduct(Z).sum() + s.dot(z);
      const double mu = compl_sum / (n_ + n_in_);
      const double pobj = c_.cwiseProduct(X).sum();
      const double dobj = rhs_.dot(y);
      const double scale = 1.0 + std::abs(pobj) + std::abs(dobj);

      IpmIterate it;
      it.primal_infeasibility = m > 0 ? rp.cwiseAbs().maxCoeff() : 0.0;
      it.dual_infeasibility =
          std::sqrt(rd.squaredNorm() + rl.squaredNorm()) / (1.0 + c_norm);
      it.relative_gap =
          std::max(std::abs(compl_sum), std::abs(pobj - dobj)) / scale;
      it.mu = mu;

      const double merit = std::max(
          {it.primal_infeasibility, it.dual_infeasibility, it.relative_gap});
      if (merit < best_merit) {
        best_merit = merit;
        best.X = X;
        best.Z = Z;
        best.y = y;
        best.slack = s;
        best.iterations = iter;
        best.primal_infeasibility = it.primal_infeasibility;
        best.dual_infeasibility = it.dual_infeasibility;
        best.relative_gap = it.relative_gap;
      }

      const bool done = it.primal_infeasibility <= opts.tol_feas &&
                        it.dual_infeasibility <= opts.tol_feas &&
                        it.relative_gap <= opts.tol_gap;
      if (done || iter >= opts.max_iters || stalled >= 3) {
        out.trace.push_back(it);
        IpmResult result = done ? IpmResult{} : best;
        if (done) {
          result.X = X;
          result.Z = Z;
          result.y = y;
          result.slack = s;
          result.iterations = iter;
          result.primal_infeasibility = it.primal_infeasibility;
          result.dual_infeasibility = it.dual_infeasibility;
          result.relative_gap = it.relative_gap;
        }
        result.status = done                ? IpmStatus::kConverged
                        : stalled >= 3      ? IpmStatus::kStalled
                                            : IpmStatus::kMaxIterations;
        result.trace = std::move(out.trace);
        return result;
      }

      Eigen::LLT<MatrixXd> z_chol(Z);
      if (z_chol.info() != Eigen::Success) {
        throw Error(ErrorKind::kNumericalBreakdown,
                    "dual iterate lost positive definiteness");
      }
      const MatrixXd z_inv = z_chol.solve(MatrixXd::Identity(n_, n_));
      const VectorXd s_over_z = s.cwiseQuotient(z);

      // Schur complement M_ij = <A_i, X A_j Z^-1> (+ s/z on slack rows).
      std::vector<MatrixXd> xaz(m);
      for (int j = 0; j < m; ++j) xaz[j] = X * rows_[j] * z_inv;
      MatrixXd schur(m, m);
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
          schur(i, j) = rows_[i].cwiseProduct(xaz[j]).sum();
        }
      }
      schur = 0.5 * (schur + schur.transpose()).eval();
      for (int j = 0; j < n_in_; ++j) schur(n_eq_ + j, n_eq_ + j) += s_over_z[j];
      if (!schur.allFinite()) {
        throw Error(ErrorKind::kNumericalBreakdown, "non-finite Schur matrix");
      }
      Eigen::LDLT<MatrixXd> schur_fact(schur);
      if (schur_fact.info() != Eigen::Success) {
        throw Error(ErrorKind::kNumericalBreakdown,
                    "Schur complement factorization failed");
      }

      const MatrixXd x_rd_zinv = X * rd * z_inv;
      auto direction = [&](const MatrixXd& g, const VectorXd& gl) {
        VectorXd h = rp - apply(g - x_rd_zinv);
        if (n_in_ > 0) h.tail(n_in_) -= gl - s_over_z.cwiseProduct(rl);
        Direction d;
        d.dy = schur_fact.solve(h);
        d.dZ = rd - adjoint(d.dy);
        const MatrixXd raw = g - X * d.dZ * z_inv;
        d.dX = 0.5 * (raw + raw.transpose());
        d.dz = rl - d.dy.tail(n_in_);
        d.ds = gl - s_over_z.cwiseProduct(d.dz);
        return d;
      };

      // Predictor.
      const Direction aff = direction(-X, -s);
      const double ap_aff = std::min(1.0, max_step(X, aff.dX, s, aff.ds));
      const double ad_aff = std::min(1.0, max_step(Z, aff.dZ, z, aff.dz));
      const double mu_aff =
          ((X + ap_aff * aff.dX).cwiseProduct(Z + ad_aff * aff.dZ).sum() +
           (s + ap_aff * aff.ds).dot(z + ad_aff * aff.dz)) /
          (n_ + n_in_);
      const double sigma =
          mu > 0 ? std::clamp(std::pow(mu_aff / mu, 3.0), 0.0, 1.0) : 0.0;

      // Corrector.
      const MatrixXd g =
          sigma * mu * z_inv - X - aff.dX * aff.dZ * z_inv;
      VectorXd gl(n_in_);
      for (int j = 0; j < n_in_; ++j) {
        gl[j] = (sigma * mu - s[j] * z[j] - aff.ds[j] * aff.dz[j]) / z[j];
      }
      const Direction dir = direction(g, gl);
      if (!dir.dX.allFinite() || !dir.dZ.allFinite() || !dir.dy.allFinite()) {
        throw Error(ErrorKind::kNumericalBreakdown, "non-finite search direction");
      }

      const double ap = std::min(
          1.0, opts.step_fraction * max_step(X, dir.dX, s, dir.ds));
      const double ad = std::min(
          1.0, opts.step_fraction * max_step(Z, dir.dZ, z, dir.dz));
      it.primal_step = ap;
      it.dual_step = ad;
      out.trace.push_back(it);

      stalled = (ap < 1e-10 && ad < 1e-10) ? stalled + 1 : 0;

      X += ap * dir.dX;
      s += ap * dir.ds;
      y += ad * dir.dy;
      Z += ad * dir.dZ;
      z += ad * dir.dz;
      X = 0.5 * (X + X.transpose()).eval();
      Z = 0.5 * (Z + Z.transpose()).eval();
    }
  }

 private:
  struct Direction {
    Eigen::MatrixXd dX, dZ;
    Eigen::VectorXd dy, dz, ds;
  };

  // Linearly dependent equality rows make the Schur complement singular;
  // after the consistency check they carry no information and are dropped.
  void drop_dependent_equalities() {
    if (n_eq_ == 0) return;
    Eigen::MatrixXd op(n_ * n_, n_eq_);
    for (int i = 0; i < n_eq_; ++i) {
      op.col(i) = Eigen::Map<const Eigen::VectorXd>(rows_[i].data(), n_ * n_);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(op);
    qr.setThreshold(1e-10);
    const int rank = static_cast<int>(qr.rank());
    if (rank == n_eq_) return;
    std::vector<int> keep;
    for (int i = 0; i < rank; ++i) keep.push_back(qr.colsPermutation().indices()[i]);
    std::sort(keep.begin(), keep.end());
    std::vector<Eigen::MatrixXd> rows;
    Eigen::VectorXd rhs(rank + n_in_);
    for (int i = 0; i < rank; ++i) {
      rows.push_back(rows_[keep[i]]);
      rhs[i] = rhs_[keep[i]];
    }
    for (int j = 0; j < n_in_; ++j) {
      rows.push_back(rows_[n_eq_ + j]);
      rhs[rank + j] = rhs_[n_eq_ + j];
    }
    rows_ = std::move(rows);
    rhs_ = std::move(rhs);
    n_eq_ = rank;
  }

  Eigen::VectorXd apply(const Eigen::MatrixXd& x) const {
    Eigen::VectorXd out(num_rows());
    for (int i = 0; i < num_rows(); ++i) out[i] = rows_[i].cwiseProduct(x).sum();
    return out;
  }

  Eigen::MatrixXd adjoint(const Eigen::VectorXd& y) const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_, n_);
    for (int i = 0; i < num_rows(); ++i) out += y[i] * rows_[i];
    return out;
  }

  /// Largest alpha keeping both M + alpha dM psd and v + alpha dv >= 0.
  static double max_step(const Eigen::MatrixXd& mat, const Eigen::MatrixXd& dmat,
                         const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
    double alpha = std::numeric_limits<double>::infinity();
    Eigen::LLT<Eigen::MatrixXd> chol(mat);
    if (chol.info() != Eigen::Success) {
      throw Error(ErrorKind::kNumericalBreakdown,
                  "iterate lost positive definiteness");
    }
    const Eigen::MatrixXd l = chol.matrixL();
    const Eigen::MatrixXd linv_d =
        l.triangularView<Eigen::Lower>().solve(dmat);
    const Eigen::MatrixXd w =
        l.triangularView<Eigen::Lower>().solve(linv_d.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
        0.5 * (w + w.transpose()), Eigen::EigenvaluesOnly);
    const double lmin = eig.eigenvalues().minCoeff();
    if (lmin < 0) alpha = -1.0 / lmin;
    for (int j = 0; j < v.size(); ++j) {
      if (dv[j] < 0) alpha = std::min(alpha, -v[j] / dv[j]);
    }
    return alpha;
  }

  Eigen::MatrixXd c_;
  int n_;
  int n_eq_;
  int n_in_;
  std::vector<Eigen::MatrixXd> rows_;
  Eigen::VectorXd rhs_;
};

}  // namespace rangeloc
