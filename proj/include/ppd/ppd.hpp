#pragma once

// Umbrella header.

#include "ppd/core_types.hpp"
#include "ppd/rng.hpp"
#include "ppd/analytic.hpp"
#include "ppd/stochastic.hpp"
#include "ppd/pipeline_sim.hpp"
#include "ppd/trace.hpp"
#include "ppd/mockmodel.hpp"
