#pragma once

// Synthetic instances, noise injection, error metrics and the Monte Carlo
// harness used for the accuracy studies.

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rangeloc/errors.hpp"
#include "rangeloc/geometry.hpp"
#include "rangeloc/pipeline.hpp"

namespace rangeloc {

enum class TrajectoryKind { kRandomWalk, kStraightLine, kParallelLines, kNearParallel };

inline std::string_view to_string(TrajectoryKind k) {
  switch (k) {
    case TrajectoryKind::kRandomWalk: return "random_walk";
    case TrajectoryKind::kStraightLine: return "straight_line";
    case TrajectoryKind::kParallelLines: return "parallel_lines";
    case TrajectoryKind::kNearParallel: return "near_parallel";
  }
  return "unknown";
}

struct Box {
  Point3 lo = Point3::Constant(-1000.0);
  Point3 hi = Point3::Constant(1000.0);
};

struct TrajectoryConfig {
  TrajectoryKind kind = TrajectoryKind::kRandomWalk;
  int n_points = 7;
  /// Per-axis standard deviation of a walk step, or the spacing along a line.
  double step_scale = 250.0;
  Box region;
  std::uint64_t seed = 0;
  /// Fixed first point; drawn uniformly in the region when absent.
  std::optional<Point3> start;
  /// Line direction for parallel_lines / near_parallel. Two calls sharing it
  /// produce parallel paths regardless of their seeds.
  std::uint64_t direction_seed = 0;
  /// near_parallel only: per-axis jitter added to each point (meters).
  double jitter = 5.0;
};

struct NoiseConfig {
  double snr_db = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;
};

struct ErrorMetrics {
  double direction_error_deg = 0.0;
  double translation_rel_error = 0.0;
  double rotation_frob_error = 0.0;
};

/// splitmix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return mix_seed(mix_seed(a) ^ (b + 0x632be59bd9b4e019ULL));
}

namespace detail {

inline Point3 uniform_in(const Box& box, std::mt19937_64& rng) {
  Point3 p;
  for (int i = 0; i < 3; ++i) {
    std::uniform_real_distribution<double> u(box.lo[i], box.hi[i]);
    p[i] = u(rng);
  }
  return p;
}

inline Point3 gaussian3(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  const double x = g(rng), y = g(rng), z = g(rng);
  return {x, y, z};
}

inline Point3 unit_direction(std::mt19937_64& rng) {
  Point3 d;
  do {
    d = gaussian3(rng);
  } while (d.norm() < 1e-12);
  return d.normalized();
}

}  // namespace detail

inline std::vector<Point3> generate_trajectory(const TrajectoryConfig& cfg) {
  if (cfg.n_points < 1 || !(cfg.step_scale > 0)) {
    throw Error(ErrorKind::kInvalidArgument,
                "trajectory needs n_points >= 1 and step_scale > 0");
  }
  std::mt19937_64 rng(mix_seed(cfg.seed, 1));
  const Point3 start =
      cfg.start ? *cfg.start : detail::uniform_in(cfg.region, rng);
  std::vector<Point3> pts;
  pts.reserve(static_cast<std::size_t>(cfg.n_points));
  pts.push_back(start);
  switch (cfg.kind) {
    case TrajectoryKind::kRandomWalk:
      for (int k = 1; k < cfg.n_points; ++k) {
        pts.push_back(pts.back() + cfg.step_scale * detail::gaussian3(rng));
      }
      break;
    case TrajectoryKind::kStraightLine: {
      const Point3 dir = detail::unit_direction(rng);
      for (int k = 1; k < cfg.n_points; ++k) {
        pts.push_back(start + (cfg.step_scale * k) * dir);
      }
      break;
    }
    case TrajectoryKind::kParallelLines:
    case TrajectoryKind::kNearParallel: {
      std::mt19937_64 drng(mix_seed(cfg.direction_seed, 2));
      const Point3 dir = detail::unit_direction(drng);
      for (int k = 1; k < cfg.n_points; ++k) {
        pts.push_back(start + (cfg.step_scale * k) * dir);
      }
      if (cfg.kind == TrajectoryKind::kNearParallel) {
        for (auto& p : pts) p += cfg.jitter * detail::gaussian3(rng);
      }
      break;
    }
  }
  return pts;
}

/// Uniformly distributed rotation (normalized Gaussian quaternion).
inline Rotation random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::Quaterniond q;
  do {
    const double w = g(rng), x = g(rng), y = g(rng), z = g(rng);
    q = Eigen::Quaterniond(w, x, y, z);
  } while (q.norm() < 1e-12);
  return Rotation::from_quaternion(q);
}

inline std::vector<Measurement> synth_instance(
    const RigidTransform& truth, std::span<const Point3> traj_ref,
    std::span<const Point3> traj_local) {
  if (traj_ref.size() != traj_local.size()) {
    throw Error(ErrorKind::kLengthMismatch,
                "reference and local trajectories differ in length");
  }
  std::vector<Measurement> ms;
  ms.reserve(traj_ref.size());
  for (std::size_t k = 0; k < traj_ref.size(); ++k) {
    ms.push_back({static_cast<double>(k), traj_ref[k], traj_local[k],
                  predict_distance(truth, traj_ref[k], traj_local[k])});
  }
  return ms;
}

struct NoisyMeasurements {
  std::vector<Measurement> measurements;
  double sigma = 0.0;
};

/// sigma = mean(distance) / 10^(snr/20). Negative noisy ranges are kept.
inline NoisyMeasurements add_noise(std::span<const Measurement> ms,
                                   const NoiseConfig& cfg) {
  NoisyMeasurements out{{ms.begin(), ms.end()}, 0.0};
  if (std::isinf(cfg.snr_db) && cfg.snr_db > 0) return out;
  if (!std::isfinite(cfg.snr_db) || !(cfg.snr_db > 0)) {
    throw Error(ErrorKind::kInvalidArgument, "snr_db must be positive");
  }
  double mean = 0.0;
  for (const auto& m : ms) mean += m.distance;
  if (!ms.empty()) mean /= static_cast<double>(ms.size());
  if (!(mean > 0)) {
    throw Error(ErrorKind::kZeroSignal, "mean distance is zero");
  }
  out.sigma = mean / std::pow(10.0, cfg.snr_db / 20.0);
  std::mt19937_64 rng(mix_seed(cfg.seed, 3));
  std::normal_distribution<double> g;
  for (auto& m : out.measurements) m.distance += out.sigma * g(rng);
  return out;
}

/// Angle between the estimated and true translations, in degrees.
inline double direction_error(const Point3& t_est, const Point3& t_true) {
  const double ne = t_est.norm(), nt = t_true.norm();
  if (!(ne > 0) || !(nt > 0)) {
    throw Error(ErrorKind::kZeroVector, "direction of a zero vector");
  }
  const double c = std::clamp(t_est.dot(t_true) / (ne * nt), -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

inline double rotation_error(const Rotation& est, const Rotation& truth) {
  return (est.matrix() - truth.matrix()).norm();
}

inline ErrorMetrics evaluate(const RigidTransform& est,
                             const RigidTransform& truth) {
  ErrorMetrics m;
  m.direction_error_deg = direction_error(est.translation, truth.translation);
  m.translation_rel_error = (est.translation - truth.translation).norm() /
                            truth.translation.norm();
  m.rotation_frob_error = rotation_error(est.rotation, truth.rotation);
  return m;
}

/// A generic random-walk instance: truth uniform on SO(3) with T uniform in
/// the region, reference walk started uniformly in the region and local walk
/// started at the local origin.
struct Instance {
  RigidTransform truth;
  std::vector<Measurement> measurements;
};

inline Instance random_instance(int n, std::uint64_t seed,
                                double step_scale = 250.0,
                                const Box& region = {}) {
  std::mt19937_64 rng(mix_seed(seed, 4));
  Instance inst;
  inst.truth.rotation = random_rotation(rng);
  do {
    inst.truth.translation = detail::uniform_in(region, rng);
  } while (inst.truth.translation.norm() < 1e-9);
  TrajectoryConfig ref;
  ref.n_points = n;
  ref.step_scale = step_scale;
  ref.region = region;
  ref.seed = mix_seed(seed, 5);
  TrajectoryConfig loc = ref;
  loc.seed = mix_seed(seed, 6);
  loc.start = Point3::Zero();
  inst.measurements = synth_instance(inst.truth, generate_trajectory(ref),
                                     generate_trajectory(loc));
  return inst;
}

/// Two paths of the given kind built in the global frame (sharing a line
/// direction for the line kinds), with the second one expressed in the
/// local frame of a random truth. Parallel paths in the global frame stay
/// parallel after the mapping.
inline Instance paired_instance(TrajectoryKind kind, int n, std::uint64_t seed,
                                double step_scale = 250.0,
                                const Box& region = {}) {
  std::mt19937_64 rng(mix_seed(seed, 8));
  Instance inst;
  inst.truth.rotation = random_rotation(rng);
  inst.truth.translation = detail::uniform_in(region, rng);
  TrajectoryConfig a;
  a.kind = kind;
  a.n_points = n;
  a.step_scale = step_scale;
  a.region = region;
  a.seed = mix_seed(seed, 9);
  a.direction_seed = mix_seed(seed, 10);
  TrajectoryConfig b = a;
  b.seed = mix_seed(seed, 11);
  const auto ref = generate_trajectory(a);
  auto loc = generate_trajectory(b);
  const Matrix3 rt = inst.truth.rotation.matrix().transpose();
  for (auto& p : loc) p = rt * (p - inst.truth.translation);
  inst.measurements = synth_instance(inst.truth, ref, loc);
  return inst;
}

struct StudyConfig {
  std::vector<int> n_values{7, 8, 9, 10, 11, 12, 13, 14, 15, 16};
  std::vector<double> snr_values{10.0, 20.0, 30.0};
  int trials = 200;
  std::uint64_t master_seed = 1;
  double step_scale = 250.0;
  Box region;
  PipelineOptions pipeline;
};

struct StudyRow {
  int n_measurements = 0;
  double snr_db = 0.0;
  /// Means over successful trials after refinement.
  ErrorMetrics mean;
  /// Means over the same trials for the relaxation + Procrustes estimate.
  ErrorMetrics mean_relaxed;
  int trials = 0;
  int failures = 0;
  /// Successful trials whose refined objective exceeded the initial one.
  int objective_increases = 0;
};

/// Per-trial seeds depend on (master seed, N, trial) only, so every SNR
/// level sees the same trajectories and the same unit noise draws.
inline std::vector<StudyRow> monte_carlo(const StudyConfig& cfg) {
  std::vector<StudyRow> rows;
  for (int n : cfg.n_values) {
    if (n < kMinGenericMeasurements) {
      throw Error(ErrorKind::kInvalidArgument,
                  "study points need at least 7 measurements");
    }
    for (double snr : cfg.snr_values) {
      StudyRow row;
      row.n_measurements = n;
      row.snr_db = snr;
      row.trials = cfg.trials;
      int ok = 0;
      for (int k = 0; k < cfg.trials; ++k) {
        const std::uint64_t seed =
            mix_seed(mix_seed(cfg.master_seed, static_cast<std::uint64_t>(n)),
                     static_cast<std::uint64_t>(k));
        try {
          const Instance inst =
              random_instance(n, seed, cfg.step_scale, cfg.region);
          const auto noisy =
              add_noise(inst.measurements, {snr, mix_seed(seed, 7)});
          const EstimationReport rep =
              run_pipeline(noisy.measurements, cfg.pipeline);
          if (rep.diagnostics.termination == "max_iterations") {
            ++row.failures;
            continue;
          }
          const ErrorMetrics e = evaluate(rep.mle_estimate, inst.truth);
          const ErrorMetrics e0 =
              evaluate(rep.procrustes_estimate, inst.truth);
          row.mean.direction_error_deg += e.direction_error_deg;
          row.mean.translation_rel_error += e.translation_rel_error;
          row.mean.rotation_frob_error += e.rotation_frob_error;
          row.mean_relaxed.direction_error_deg += e0.direction_error_deg;
          row.mean_relaxed.translation_rel_error += e0.translation_rel_error;
          row.mean_relaxed.rotation_frob_error += e0.rotation_frob_error;
          if (rep.diagnostics.objective_after >
              rep.diagnostics.objective_before) {
            ++row.objective_increases;
          }
          ++ok;
        } catch (const Error&) {
          ++row.failures;
        }
      }
      if (ok > 0) {
        for (ErrorMetrics* m : {&row.mean, &row.mean_relaxed}) {
          m->direction_error_deg /= ok;
          m->translation_rel_error /= ok;
          m->rotation_frob_error /= ok;
        }
      }
      rows.push_back(row);
    }
  }
  return rows;
}

inline void write_study_csv(std::ostream& os, std::span<const StudyRow> rows) {
  os << "n_measurements,snr_db,mean_direction_error_deg,mean_rotation_frob,"
        "mean_translation_rel,trials,failures\n";
  os.precision(10);
  for (const auto& r : rows) {
    os << r.n_measurements << ',' << r.snr_db << ','
       << r.mean.direction_error_deg << ',' << r.mean.rotation_frob_error
       << ',' << r.mean.translation_rel_error << ',' << r.trials << ','
       << r.failures << '\n';
  }
}

}  // namespace rangeloc
