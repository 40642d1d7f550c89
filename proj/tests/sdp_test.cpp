#include "rangeloc/sdp.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "rangeloc/sim.hpp"

namespace rangeloc {
namespace {

ThetaVector RandomTheta(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  ThetaVector th;
  for (int i = 0; i < 16; ++i) th[i] = g(rng);
  return th;
}

double ConstraintSum(const ConstraintSet& cons, const Matrix17& x, int i) {
  return cons.equalities[i].Q.cwiseProduct(x).sum() - cons.equalities[i].rhs;
}

TEST(AssembleRow, OriginOnlyKeepsNormTerm) {
  const auto [row, rhs] = assemble_row({0.0, Point3::Zero(), Point3::Zero(), 5.0});
  Eigen::Matrix<double, 1, 16> expect = Eigen::Matrix<double, 1, 16>::Zero();
  expect[15] = 1.0;
  EXPECT_EQ(row, expect);
  EXPECT_EQ(rhs, 25.0);
}

TEST(AssembleRow, TermByTermExample) {
  const auto [row, rhs] =
      assemble_row({0.0, Point3(1, 0, 0), Point3(0, 1, 0), 1.0});
  Eigen::Matrix<double, 1, 16> expect = Eigen::Matrix<double, 1, 16>::Zero();
  expect[1] = -2.0;
  expect[9] = -2.0;
  expect[13] = 2.0;
  expect[15] = 1.0;
  EXPECT_EQ(row, expect);
  EXPECT_EQ(rhs, -1.0);
}

TEST(AssembleRow, ConsistentWithPredictedDistance) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-800.0, 800.0);
  for (int trial = 0; trial < 200; ++trial) {
    const RigidTransform t{random_rotation(rng), Point3(u(rng), u(rng), u(rng))};
    const Point3 x(u(rng), u(rng), u(rng)), y(u(rng), u(rng), u(rng));
    const Measurement m{0.0, x, y, predict_distance(t, x, y)};
    const auto [row, rhs] = assemble_row(m);
    const double lhs = row.dot(pack_theta(t).values);
    EXPECT_NEAR(lhs, rhs, 1e-12 * (std::abs(rhs) + 1e6));
  }
}

TEST(AssembleSystem, EmptyIsRejected) {
  try {
    assemble_system({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEmptyMeasurements);
  }
}

TEST(AssembleSystem, RowsInInputOrderAndSymmetricCost) {
  const Instance inst = random_instance(9, 5);
  const LinearSystem sys = assemble_system(inst.measurements);
  ASSERT_EQ(sys.A.rows(), 9);
  for (int k = 0; k < 9; ++k) {
    const auto [row, rhs] = assemble_row(inst.measurements[k]);
    EXPECT_EQ(sys.A.row(k), row);
    EXPECT_EQ(sys.b[k], rhs);
  }
  EXPECT_EQ(sys.P, sys.P.transpose());
}

TEST(AssembleSystem, SingleMeasurementHasRankOne) {
  const Instance inst = random_instance(1, 2);
  const LinearSystem sys = assemble_system(inst.measurements);
  EXPECT_EQ(sys.A.rows(), 1);
  EXPECT_EQ(sys.A.cols(), 16);
  EXPECT_EQ(rank_diagnostic(sys).rank, 1);
}

TEST(RankDiagnostic, GenericSevenHasRankSeven) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const LinearSystem sys = assemble_system(random_instance(7, seed).measurements);
    EXPECT_EQ(rank_diagnostic(sys).rank, 7) << "seed " << seed;
  }
}

TEST(RankDiagnostic, ThreeMeasurementsAtMostThree) {
  const LinearSystem sys = assemble_system(random_instance(3, 8).measurements);
  EXPECT_LE(rank_diagnostic(sys).rank, 3);
}

TEST(RankDiagnostic, DuplicatedRowsKeepRank) {
  auto ms = random_instance(8, 9).measurements;
  const int before = rank_diagnostic(assemble_system(ms)).rank;
  const auto copy = ms;
  ms.insert(ms.end(), copy.begin(), copy.end());
  EXPECT_EQ(rank_diagnostic(assemble_system(ms)).rank, before);
}

TEST(RankDiagnostic, ParallelLinesStayBelowSeven) {
  for (int n : {7, 10, 16, 30}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const Instance inst =
          paired_instance(TrajectoryKind::kParallelLines, n, seed);
      EXPECT_LT(rank_diagnostic(assemble_system(inst.measurements)).rank, 7)
          << "n " << n << " seed " << seed;
    }
  }
}

TEST(ConstraintMatrices, Counts) {
  EXPECT_EQ(constraint_matrices(false, false).equalities.size(), 11u);
  const ConstraintSet full = constraint_matrices(true, false);
  EXPECT_EQ(full.equalities.size(), 15u);
  EXPECT_TRUE(full.inequalities.empty());
  EXPECT_EQ(constraint_matrices(true, true).inequalities.size(), 27u);
  for (const auto& c : constraint_matrices(true, true).equalities) {
    EXPECT_EQ(c.Q, c.Q.transpose()) << c.label;
  }
}

TEST(ConstraintMatrices, FirstRowNormEntries) {
  const auto& c1 = constraint_matrices().equalities[0];
  Matrix17 expect = Matrix17::Zero();
  expect(0, 0) = expect(1, 1) = expect(2, 2) = 1.0;
  EXPECT_EQ(c1.Q, expect);
  EXPECT_EQ(c1.rhs, 1.0);
}

TEST(ConstraintMatrices, BilinearTranslationEntries) {
  const auto& c7 = constraint_matrices().equalities[6];
  Matrix17 expect = Matrix17::Zero();
  for (auto [a, b] : {std::pair{0, 9}, {3, 10}, {6, 11}, {12, kCorner}}) {
    expect(a, b) = expect(b, a) = 0.5;
  }
  EXPECT_EQ(c7.Q, expect);
  EXPECT_EQ(c7.rhs, 0.0);
}

TEST(ConstraintMatrices, EncodingMatchesResiduals) {
  const ConstraintSet cons = constraint_matrices(true, false);
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const ThetaVector th = RandomTheta(rng);
    const Matrix17 x = lift(th);
    const auto c = constraint_residuals(th);
    for (int i = 0; i < 14; ++i) {
      EXPECT_NEAR(ConstraintSum(cons, x, i), c[i], 1e-10) << "C" << i + 1;
    }
    EXPECT_EQ(ConstraintSum(cons, x, 14), 0.0);
  }
}

TEST(ConstraintMatrices, RltBoundsHoldOnRotations) {
  const ConstraintSet cons = constraint_matrices(true, true);
  std::mt19937_64 rng(18);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix17 x = lift(pack_theta({random_rotation(rng), Point3(1, 2, 3)}));
    for (const auto& c : cons.inequalities) {
      EXPECT_LE(c.Q.cwiseProduct(x).sum(), c.rhs + 1e-12) << c.label;
    }
  }
}

TEST(ExtractRank1, ExactLiftIsRecovered) {
  std::mt19937_64 rng(19);
  const ThetaVector th = RandomTheta(rng);
  const Rank1Estimate est = extract_rank1(lift(th));
  EXPECT_LT((est.theta.values - th.values).norm(), 1e-12 * th.values.norm());
  EXPECT_EQ(est.sv_ratio, kSvRatioCap);
}

TEST(ExtractRank1, SmallIsotropicPerturbation) {
  std::mt19937_64 rng(20);
  const ThetaVector th = RandomTheta(rng);
  const Matrix17 x = lift(th) + 1e-8 * Matrix17::Identity();
  const Rank1Estimate est = extract_rank1(x);
  EXPECT_LT((est.theta.values - th.values).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT(est.sv_ratio, kSvRatioCap);
}

TEST(ExtractRank1, ScaleInvariant) {
  std::mt19937_64 rng(21);
  const ThetaVector th = RandomTheta(rng);
  const Matrix17 x = lift(th) + 1e-3 * Matrix17::Identity();
  const Rank1Estimate a = extract_rank1(x);
  const Rank1Estimate b = extract_rank1(4.0 * x);
  EXPECT_LT((a.theta.values - b.theta.values).norm(),
            1e-12 * a.theta.values.norm());
  EXPECT_NEAR(a.sv_ratio, b.sv_ratio, 1e-9 * a.sv_ratio);
}

TEST(ExtractRank1, BalancingDoesNotChangeExactLift) {
  const ThetaVector th = pack_theta({Rotation::about_axis(Point3(1, 1, 0), 0.4),
                                     Point3(300, -800, 150)});
  const Rank1Estimate est = extract_rank1(lift(th), lifted_scaling(500.0));
  for (int i = 0; i < 16; ++i) {
    EXPECT_NEAR(est.theta[i], th[i], 1e-9 * (1.0 + std::abs(th[i])));
  }
}

TEST(ExtractRank1, VanishingCornerIsDegenerate) {
  Vector17 v = Vector17::Zero();
  v[0] = 1.0;
  try {
    extract_rank1(v * v.transpose());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDegenerateSpectrum);
  }
}

TEST(ExtractRank1, ResidualsShrinkAsSpectrumSharpens) {
  std::mt19937_64 rng(22);
  const ThetaVector th = pack_theta({random_rotation(rng), Point3(0.3, -0.2, 0.5)});
  std::normal_distribution<double> g;
  Matrix17 w;
  for (int i = 0; i < 17; ++i)
    for (int j = 0; j < 17; ++j) w(i, j) = g(rng);
  const Matrix17 noise = w * w.transpose() / 17.0;
  double last_ratio = 0.0, last_resid = std::numeric_limits<double>::infinity();
  for (double eps : {1e-1, 1e-2, 1e-3, 1e-4, 1e-5}) {
    const Rank1Estimate est = extract_rank1(lift(th) + eps * noise);
    const auto c = constraint_residuals(est.theta);
    double resid = 0.0;
    for (double v : c) resid += v * v;
    resid = std::sqrt(resid);
    EXPECT_GT(est.sv_ratio, last_ratio);
    EXPECT_LT(resid, last_resid);
    last_ratio = est.sv_ratio;
    last_resid = resid;
  }
}

TEST(SolveSdp, LiftedTruthIsFeasibleWithZeroCost) {
  const ConstraintSet cons = constraint_matrices(true, true);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Instance inst = random_instance(9, seed);
    const LinearSystem sys = assemble_system(inst.measurements);
    const ThetaVector th = pack_theta(inst.truth);
    const Matrix17 x = lift(th);
    const double scale = x.cwiseAbs().maxCoeff();
    for (const auto& c : cons.equalities) {
      EXPECT_NEAR(c.Q.cwiseProduct(x).sum(), c.rhs, 1e-9 * scale) << c.label;
    }
    EXPECT_NEAR(sys.P.cwiseProduct(x).sum(), 0.0, 1e-12 * sys.P.norm() * scale);
  }
}

TEST(SolveSdp, NoiselessSixteenRecoversTheta) {
  const ConstraintSet cons = constraint_matrices();
  // The factor error tracks the square root of the duality gap; the default
  // 1e-8 gap leaves ~1e-4 per entry, so this check tightens it.
  SdpOptions opts;
  opts.tol_gap = 1e-10;
  opts.tol_feas = 1e-10;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Instance inst = random_instance(16, seed);
    const LinearSystem sys = assemble_system(inst.measurements);
    const SdpSolution sol = solve_sdp(sys, cons, opts);
    ASSERT_EQ(sol.status, SdpStatus::kConverged);
    EXPECT_FALSE(sol.under_determined);
    const Rank1Estimate est = extract_rank1(sol.X, sol.scaling);
    const ThetaVector truth = pack_theta(inst.truth);
    // Per entry in balanced units (rotation entries unitless, lengths in
    // multiples of the data scale).
    for (int i = 0; i < 16; ++i) {
      EXPECT_NEAR(est.theta[i] / sol.scaling[i], truth[i] / sol.scaling[i], 1e-4)
          << "seed " << seed << " entry " << i;
    }
  }
}

TEST(SolveSdp, NoiselessSpectrumIsSharpAtDefaults) {
  const ConstraintSet cons = constraint_matrices();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Instance inst = random_instance(16, seed);
    const SdpSolution sol = solve_sdp(assemble_system(inst.measurements), cons);
    EXPECT_GE(sol.sv_ratio, 1e2) << "seed " << seed;
    const Rank1Estimate est = extract_rank1(sol.X, sol.scaling);
    const ThetaVector truth = pack_theta(inst.truth);
    for (int i = 0; i < 16; ++i) {
      EXPECT_NEAR(est.theta[i] / sol.scaling[i], truth[i] / sol.scaling[i], 1e-3);
    }
  }
}

TEST(SolveSdp, OptimumNoWorseThanLiftedTruth) {
  const ConstraintSet cons = constraint_matrices();
  const Instance inst = random_instance(10, 77);
  const auto noisy = add_noise(inst.measurements, {20.0, 78});
  const LinearSystem sys = assemble_system(noisy.measurements);
  const SdpSolution sol = solve_sdp(sys, cons);
  const double truth_cost = sys.P.cwiseProduct(lift(pack_theta(inst.truth))).sum();
  const double opt_cost = sys.P.cwiseProduct(sol.X).sum();
  EXPECT_LE(opt_cost, truth_cost * (1.0 + 1e-6));
}

TEST(SolveSdp, ZeroCostIsPureFeasibility) {
  LinearSystem sys;
  sys.A = Eigen::MatrixXd::Zero(1, 16);
  sys.b = Eigen::VectorXd::Zero(1);
  const ConstraintSet cons = constraint_matrices();
  const SdpSolution sol = solve_sdp(sys, cons);
  ASSERT_EQ(sol.status, SdpStatus::kConverged);
  EXPECT_NEAR(sol.X(kCorner, kCorner), 1.0, 1e-8);
  for (const auto& c : cons.equalities) {
    EXPECT_NEAR(c.Q.cwiseProduct(sol.X).sum(), c.rhs, 1e-7) << c.label;
  }
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix17>(sol.X).eigenvalues()[0],
            -1e-8);
}

TEST(SolveSdp, InfeasibilityDecreasesAfterWarmUp) {
  const Instance inst = random_instance(12, 31);
  const auto noisy = add_noise(inst.measurements, {30.0, 32});
  const SdpSolution sol =
      solve_sdp(assemble_system(noisy.measurements), constraint_matrices(true, true));
  ASSERT_GT(sol.trace.size(), 3u);
  for (std::size_t k = 3; k < sol.trace.size(); ++k) {
    EXPECT_LE(sol.trace[k].primal_infeasibility,
              sol.trace[k - 1].primal_infeasibility + 1e-12)
        << "iteration " << k;
  }
}

TEST(SolveSdp, UnderDeterminedIsFlagged) {
  const SdpSolution sol = solve_sdp(
      assemble_system(random_instance(5, 4).measurements), constraint_matrices());
  EXPECT_TRUE(sol.under_determined);
}

TEST(SdpDump, RoundTrip) {
  const LinearSystem sys = assemble_system(random_instance(8, 6).measurements);
  const ConstraintSet cons = constraint_matrices(true, true);
  std::stringstream ss;
  write_sdp_problem(ss, sys, cons);
  const SdpProblemDump dump = read_sdp_problem(ss);
  EXPECT_EQ(dump.P, sys.P);
  ASSERT_EQ(dump.constraints.equalities.size(), cons.equalities.size());
  ASSERT_EQ(dump.constraints.inequalities.size(), cons.inequalities.size());
  for (std::size_t i = 0; i < cons.equalities.size(); ++i) {
    EXPECT_EQ(dump.constraints.equalities[i].Q, cons.equalities[i].Q);
    EXPECT_EQ(dump.constraints.equalities[i].rhs, cons.equalities[i].rhs);
    EXPECT_EQ(dump.constraints.equalities[i].label, cons.equalities[i].label);
  }
}

TEST(SdpDump, TruncatedInputIsParseError) {
  std::stringstream ss("rangeloc-sdp 1\ndim 17\ncost\n1 2 3\n");
  try {
    read_sdp_problem(ss);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kParseError);
  }
}

TEST(LinearLeastSquares, NoiselessSixteenIsExact) {
  const Instance inst = random_instance(20, 12);
  const ThetaVector th = linear_least_squares(assemble_system(inst.measurements));
  const ThetaVector truth = pack_theta(inst.truth);
  const Vector17 d = lifted_scaling(assemble_system(inst.measurements).length_scale);
  for (int i = 0; i < 16; ++i) {
    EXPECT_NEAR(th[i] / d[i], truth[i] / d[i], 1e-6) << i;
  }
}

}  // namespace
}  // namespace rangeloc
