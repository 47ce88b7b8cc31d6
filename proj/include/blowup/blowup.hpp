#pragma once

// Numerical core: nonlinearity, blow-up ODE, wave solver, similarity
// variables, rate analysis and the Duhamel/Picard oracle.
#include "blowup/duhamel.hpp"
#include "blowup/errors.hpp"
#include "blowup/experiment.hpp"
#include "blowup/grid.hpp"
#include "blowup/nonlinearity.hpp"
#include "blowup/ode_blowup.hpp"
#include "blowup/quadrature.hpp"
#include "blowup/rate_analysis.hpp"
#include "blowup/similarity.hpp"
#include "blowup/wave_solver.hpp"
