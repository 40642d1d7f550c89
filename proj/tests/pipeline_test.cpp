#include "rangeloc/pipeline.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>

#include "rangeloc/flight_log.hpp"
#include "rangeloc/report.hpp"
#include "rangeloc/sim.hpp"

namespace rangeloc {
namespace {

bool HasWarning(const EstimationReport& r, std::string_view prefix) {
  return std::any_of(r.diagnostics.warnings.begin(), r.diagnostics.warnings.end(),
                     [&](const std::string& w) { return w.starts_with(prefix); });
}

FlightLog RealFlight() {
  std::ifstream in(RANGELOC_DATA_DIR "/real_flight.csv");
  return parse_flight_csv(in);
}

TEST(Planarity, Examples) {
  const std::vector<Point3> flat{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}};
  EXPECT_EQ(planarity(flat), 0.0);
  const std::vector<Point3> cube{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1},
                                 {1, 1, 0}, {1, 0, 1}, {0, 1, 1}, {1, 1, 1}};
  EXPECT_NEAR(planarity(cube), 1.0, 1e-12);
  EXPECT_EQ(planarity(std::vector<Point3>{{1, 2, 3}}), 0.0);
}

TEST(RunPipeline, NoiselessSevenRecoversTruth) {
  int recovered = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Instance inst = random_instance(7, seed);
    const EstimationReport rep = run_pipeline(inst.measurements);
    const double re = rotation_error(rep.mle_estimate.rotation, inst.truth.rotation);
    const double te = (rep.mle_estimate.translation - inst.truth.translation).norm() /
                      inst.truth.translation.norm();
    recovered += re <= 1e-4 && te <= 1e-4;
    EXPECT_EQ(rep.diagnostics.rank, 7);
    EXPECT_FALSE(HasWarning(rep, "UnderDeterminedWarning"));
  }
  EXPECT_GE(recovered, 19);
}

TEST(RunPipeline, ReportFieldsArePopulated) {
  const Instance inst = random_instance(10, 3);
  const auto noisy = add_noise(inst.measurements, {30.0, 4}).measurements;
  const EstimationReport rep = run_pipeline(noisy);
  const auto& d = rep.diagnostics;
  EXPECT_EQ(rep.localized_positions.size(), noisy.size());
  EXPECT_EQ(rep.times.size(), noisy.size());
  EXPECT_LE(d.objective_after, d.objective_before);
  EXPECT_GT(d.sv_ratio, 0.0);
  EXPECT_GT(d.sdp_iterations, 0);
  EXPECT_FALSE(d.termination.empty());
  EXPECT_NEAR(d.rms_residual, std::sqrt(d.objective_after / noisy.size()), 1e-12);
  // The Procrustes output is a rotation even though the raw block is not.
  const Matrix3& r = rep.procrustes_estimate.rotation.matrix();
  EXPECT_LT((r * r.transpose() - Matrix3::Identity()).norm(), 1e-12);
  for (std::size_t k = 0; k < noisy.size(); ++k) {
    EXPECT_LT((rep.localized_positions[k] -
               rep.mle_estimate.apply(noisy[k].p_local))
                  .norm(),
              1e-12 * (1.0 + rep.localized_positions[k].norm()));
  }
}

TEST(RunPipeline, FiveRowsWarnAndComplete) {
  const Instance inst = random_instance(5, 8);
  const EstimationReport rep = run_pipeline(inst.measurements);
  EXPECT_TRUE(HasWarning(rep, "UnderDeterminedWarning"));
  EXPECT_EQ(rep.localized_positions.size(), 5u);
}

TEST(RunPipeline, ParallelLinesRaiseRankWarning) {
  const Instance inst = paired_instance(TrajectoryKind::kParallelLines, 10, 5);
  const EstimationReport rep = run_pipeline(inst.measurements);
  EXPECT_LT(rep.diagnostics.rank, 7);
  EXPECT_TRUE(HasWarning(rep, "RankWarning"));
}

TEST(RunPipeline, EmptyInput) {
  try {
    run_pipeline(std::vector<Measurement>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEmptyMeasurements);
  }
}

TEST(RunPipeline, StageNameInErrors) {
  const std::vector<Measurement> zero(7);
  try {
    run_pipeline(zero);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kRankDeficient);
    EXPECT_NE(std::string(e.what()).find("procrustes:"), std::string::npos);
  }
}

TEST(RunPipeline, RealFlightSelfConsistent) {
  const FlightLog log = RealFlight();
  ASSERT_EQ(log.rows.size(), 11u);
  const EstimationReport rep = run_pipeline(log.rows);
  double worst = 0.0;
  for (std::size_t k = 0; k < log.rows.size(); ++k) {
    const double res = (rep.localized_positions[k] - log.rows[k].p_ref).norm() -
                       log.rows[k].distance;
    worst = std::max(worst, std::abs(res));
  }
  EXPECT_LE(worst, 3.0 * rep.diagnostics.rms_residual);
  EXPECT_TRUE(HasWarning(rep, "CoplanarWarning"));
  // Height is the worst-determined axis.
  const Point3& s = rep.diagnostics.position_sensitivity;
  EXPECT_GT(s.z(), s.x());
  EXPECT_GT(s.z(), s.y());
}

TEST(RunPipeline, Deterministic) {
  const FlightLog log = RealFlight();
  EXPECT_EQ(emit_report(run_pipeline(log.rows), ReportFormat::kJson),
            emit_report(run_pipeline(log.rows), ReportFormat::kJson));
}

TEST(RunPipeline, GenericWalkIsNotFlagged) {
  const Instance inst = random_instance(12, 21);
  const EstimationReport rep =
      run_pipeline(add_noise(inst.measurements, {30.0, 22}).measurements);
  EXPECT_TRUE(rep.diagnostics.warnings.empty());
}

TEST(RunStar, IdenticalAgentsIdenticalReports) {
  const auto ms = add_noise(random_instance(9, 30).measurements, {20.0, 31}).measurements;
  const auto out = run_star({ms, ms, ms});
  ASSERT_EQ(out.size(), 3u);
  for (const auto& r : out) ASSERT_TRUE(r.report.has_value());
  EXPECT_EQ(*out[0].report, *out[1].report);
  EXPECT_EQ(*out[1].report, *out[2].report);
}

TEST(RunStar, DegenerateAgentIsIsolated) {
  const auto a = random_instance(9, 40).measurements;
  const auto b = paired_instance(TrajectoryKind::kParallelLines, 9, 41).measurements;
  const auto c = random_instance(11, 42).measurements;
  const auto out = run_star({a, b, c});
  ASSERT_EQ(out.size(), 3u);
  EXPECT_TRUE(out[0].report->diagnostics.warnings.empty());
  EXPECT_TRUE(HasWarning(*out[1].report, "RankWarning"));
  EXPECT_TRUE(out[2].report->diagnostics.warnings.empty());
  EXPECT_EQ(*out[0].report, run_pipeline(a));
  EXPECT_EQ(*out[2].report, run_pipeline(c));
}

TEST(RunStar, FailingAgentDoesNotAffectOthers) {
  const auto a = random_instance(8, 50).measurements;
  const auto c = random_instance(10, 51).measurements;
  const auto out = run_star({a, {}, c});
  ASSERT_EQ(out.size(), 3u);
  EXPECT_FALSE(out[1].report.has_value());
  EXPECT_EQ(out[1].error_kind, ErrorKind::kEmptyMeasurements);
  EXPECT_FALSE(out[1].error.empty());
  EXPECT_EQ(*out[0].report, run_pipeline(a));
  EXPECT_EQ(*out[2].report, run_pipeline(c));
}

TEST(RunStar, EmptyAgentList) { EXPECT_TRUE(run_star({}).empty()); }

}  // namespace
}  // namespace rangeloc
