// Localizes the second UAV of the bundled flight trial and prints its
// positions in the reference frame next to the range residuals.

#include <cstdio>
#include <fstream>

#include "rangeloc/rangeloc.hpp"

int main(int argc, char** argv) {
  const char* path = argc > 1 ? argv[1] : RANGELOC_DATA_DIR "/real_flight.csv";
  std::ifstream in(path);
  if (!in) {
    std::fprintf(stderr, "cannot open %s\n", path);
    return 1;
  }
  try {
    const rangeloc::FlightLog log = rangeloc::parse_flight_csv(in);
    rangeloc::PipelineOptions opts;
    opts.use_rlt = true;
    const auto rep = rangeloc::run_pipeline(log.rows, opts);

    std::printf("%8s %10s %10s %10s %10s\n", "time", "x", "y", "z", "resid");
    for (std::size_t k = 0; k < log.rows.size(); ++k) {
      const auto& p = rep.localized_positions[k];
      const double resid =
          (p - log.rows[k].p_ref).norm() - log.rows[k].distance;
      std::printf("%8.1f %10.1f %10.1f %10.1f %10.2f\n", log.rows[k].time,
                  p.x(), p.y(), p.z(), resid);
    }
    const auto& d = rep.diagnostics;
    std::printf("rms residual %.2f m, objective %.1f -> %.1f\n",
                d.rms_residual, d.objective_before, d.objective_after);
    std::printf("position sensitivity (m per m of range noise): %.1f %.1f %.1f\n",
                d.position_sensitivity.x(), d.position_sensitivity.y(),
                d.position_sensitivity.z());
    for (const auto& w : d.warnings) std::printf("%s\n", w.c_str());
  } catch (const rangeloc::Error& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  }
  return 0;
}
