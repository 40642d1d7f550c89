// Command-line front end.
//
//   rangeloc localize FILE [--format json|csv] [--no-rlt] ...
//   rangeloc simulate --n-measurements N [--snr-db S] [--seed K] ...
//   rangeloc study [--trials T] [--snr-db S ...] ...
//   rangeloc star MANIFEST
//
// Exit codes: 0 success (warnings go to stderr), 1 input error,
// 2 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "rangeloc/rangeloc.hpp"

namespace {

using namespace rangeloc;

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitNumerical = 2;

int exit_code(const Error& e) {
  return is_input_error(e.kind()) ? kExitInput : kExitNumerical;
}

struct SolverFlags {
  bool no_rlt = false;
  int max_iters = 100;
  double tol_feas = 1e-8;
  int refine_max_iters = 5000;

  PipelineOptions options() const {
    PipelineOptions o;
    o.use_rlt = !no_rlt;
    o.sdp.max_iters = max_iters;
    o.sdp.tol_feas = tol_feas;
    o.refine.max_iters = refine_max_iters;
    return o;
  }
};

void add_solver_flags(CLI::App* cmd, SolverFlags& f) {
  cmd->add_flag("--no-rlt", f.no_rlt, "Drop the |r_ij| <= 1 bound constraints");
  cmd->add_option("--max-iters", f.max_iters, "Interior-point iteration cap")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--tol-feas", f.tol_feas, "Interior-point feasibility tolerance")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--refine-max-iters", f.refine_max_iters,
                  "Likelihood refinement iteration cap")
      ->check(CLI::NonNegativeNumber);
}

FlightLog read_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kInvalidArgument, "cannot open " + path);
  try {
    return parse_flight_csv(in);
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.message());
  }
}

void print_warnings(const EstimationReport& r, const std::string& who) {
  for (const auto& w : r.diagnostics.warnings) {
    std::cerr << "warning";
    if (!who.empty()) std::cerr << " [" << who << "]";
    std::cerr << ": " << w << '\n';
  }
}

std::ostream& output(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) throw Error(ErrorKind::kInvalidArgument, "cannot write " + path);
  return file;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Range-only relative localization of a GPS-denied agent"};
  app.require_subcommand(1);

  std::string format = "json";
  std::string out_path;
  SolverFlags solver;

  // localize
  auto* localize = app.add_subcommand("localize", "Estimate (R, T) from a flight log");
  std::string log_path, dump_path;
  localize->add_option("file", log_path, "Flight-log CSV")->required();
  localize->add_option("--format", format, "Report format")
      ->check(CLI::IsMember({"json", "csv"}));
  localize->add_option("-o,--output", out_path, "Report file (default stdout)");
  localize->add_option("--dump-sdp", dump_path,
                       "Write the SDP problem data to this file");
  add_solver_flags(localize, solver);

  // simulate
  auto* simulate =
      app.add_subcommand("simulate", "Write a synthetic flight log");
  int n_meas = 7;
  double snr_db = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 1;
  double step_scale = 250.0;
  std::string kind = "random_walk";
  std::string truth_path;
  simulate->add_option("--n-measurements", n_meas, "Number of samples")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--snr-db", snr_db, "Range SNR in dB (default noiseless)");
  simulate->add_option("--seed", seed, "Random seed");
  simulate->add_option("--step-scale", step_scale, "Walk step / line spacing (m)")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--kind", kind, "Trajectory kind")
      ->check(CLI::IsMember(
          {"random_walk", "straight_line", "parallel_lines", "near_parallel"}));
  simulate->add_option("-o,--output", out_path, "Log file (default stdout)");
  simulate->add_option("--truth", truth_path, "Write the true (R, T) as JSON");

  // study
  auto* study = app.add_subcommand("study", "Monte Carlo accuracy table (CSV)");
  int trials = 200, n_min = 7, n_max = 16;
  std::vector<double> snrs{10.0, 20.0, 30.0};
  study->add_option("--trials", trials, "Trials per (N, SNR) point")
      ->check(CLI::PositiveNumber);
  study->add_option("--n-min", n_min, "Smallest N")->check(CLI::Range(7, 1000));
  study->add_option("--n-max", n_max, "Largest N")->check(CLI::Range(7, 1000));
  study->add_option("--snr-db", snrs, "SNR levels in dB");
  study->add_option("--seed", seed, "Master seed");
  study->add_option("--step-scale", step_scale, "Walk step (m)")
      ->check(CLI::PositiveNumber);
  study->add_option("-o,--output", out_path, "CSV file (default stdout)");
  add_solver_flags(study, solver);

  // star
  auto* star = app.add_subcommand(
      "star", "One localization per GPS-denied agent sharing one reference");
  std::string manifest;
  star->add_option("manifest", manifest,
                   "Text file listing one flight-log path per line")
      ->required();
  star->add_option("-o,--output", out_path, "JSON file (default stdout)");
  add_solver_flags(star, solver);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    std::ofstream file;
    if (localize->parsed()) {
      const FlightLog log = read_log(log_path);
      const PipelineOptions opts = solver.options();
      if (!dump_path.empty()) {
        std::ofstream dump(dump_path);
        if (!dump) {
          throw Error(ErrorKind::kInvalidArgument, "cannot write " + dump_path);
        }
        write_sdp_problem(dump, assemble_system(log.rows),
                          constraint_matrices(opts.include_redundant, opts.use_rlt));
      }
      const EstimationReport rep = run_pipeline(log.rows, opts);
      print_warnings(rep, "");
      output(out_path, file) << emit_report(
          rep, format == "csv" ? ReportFormat::kCsv : ReportFormat::kJson);
      return kExitOk;
    }

    if (simulate->parsed()) {
      Instance inst;
      if (kind == "random_walk") {
        inst = random_instance(n_meas, seed, step_scale);
      } else {
        const TrajectoryKind k = kind == "straight_line"
                                     ? TrajectoryKind::kStraightLine
                                 : kind == "parallel_lines"
                                     ? TrajectoryKind::kParallelLines
                                     : TrajectoryKind::kNearParallel;
        inst = paired_instance(k, n_meas, seed, step_scale);
      }
      const auto noisy =
          add_noise(inst.measurements, {snr_db, mix_seed(seed, 7)});
      write_flight_csv(output(out_path, file), noisy.measurements);
      if (!truth_path.empty()) {
        std::ofstream t(truth_path);
        if (!t) throw Error(ErrorKind::kInvalidArgument, "cannot write " + truth_path);
        nlohmann::json j = detail::transform(inst.truth);
        j["sigma"] = noisy.sigma;
        t << j.dump(2) << '\n';
      }
      return kExitOk;
    }

    if (study->parsed()) {
      if (n_max < n_min) {
        throw Error(ErrorKind::kInvalidArgument, "--n-max below --n-min");
      }
      StudyConfig cfg;
      cfg.n_values.clear();
      for (int n = n_min; n <= n_max; ++n) cfg.n_values.push_back(n);
      cfg.snr_values = snrs;
      cfg.trials = trials;
      cfg.master_seed = seed;
      cfg.step_scale = step_scale;
      cfg.pipeline = solver.options();
      const auto rows = monte_carlo(cfg);
      write_study_csv(output(out_path, file), rows);
      return kExitOk;
    }

    if (star->parsed()) {
      std::ifstream in(manifest);
      if (!in) throw Error(ErrorKind::kInvalidArgument, "cannot open " + manifest);
      const auto base = std::filesystem::path(manifest).parent_path();
      std::vector<std::string> names;
      std::vector<std::vector<Measurement>> agents;
      std::vector<std::optional<Error>> load_errors;
      std::string line;
      while (std::getline(in, line)) {
        const auto name = std::string(detail::trim(line));
        if (name.empty() || name.front() == '#') continue;
        const auto path = std::filesystem::path(name).is_absolute()
                              ? std::filesystem::path(name)
                              : base / name;
        names.push_back(name);
        try {
          agents.push_back(read_log(path.string()).rows);
          load_errors.emplace_back();
        } catch (const Error& e) {
          agents.emplace_back();
          load_errors.emplace_back(e);
        }
      }
      const auto results = run_star(agents, solver.options());
      nlohmann::json out = nlohmann::json::array();
      int code = kExitOk;
      for (std::size_t i = 0; i < results.size(); ++i) {
        nlohmann::json entry{{"agent", names[i]}};
        if (load_errors[i]) {
          entry["error"] = load_errors[i]->what();
          code = kExitInput;
        } else if (results[i].report) {
          print_warnings(*results[i].report, names[i]);
          entry["report"] = to_json(*results[i].report);
        } else {
          entry["error"] = results[i].error;
          std::cerr << "error [" << names[i] << "]: " << results[i].error << '\n';
          const int c = is_input_error(results[i].error_kind) ? kExitInput
                                                              : kExitNumerical;
          if (code == kExitOk || c == kExitInput) code = c;
        }
        out.push_back(entry);
      }
      output(out_path, file) << out.dump(2) << '\n';
      return code;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e);
  }
  return kExitOk;
}
