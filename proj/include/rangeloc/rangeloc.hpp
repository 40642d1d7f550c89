#pragma once

// Umbrella header.

#include "rangeloc/errors.hpp"
#include "rangeloc/flight_log.hpp"
#include "rangeloc/geometry.hpp"
#include "rangeloc/mle.hpp"
#include "rangeloc/pipeline.hpp"
#include "rangeloc/procrustes.hpp"
#include "rangeloc/report.hpp"
#include "rangeloc/sdp.hpp"
#include "rangeloc/sdp_solver.hpp"
#include "rangeloc/sim.hpp"
