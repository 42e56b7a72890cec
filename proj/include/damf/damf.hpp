#pragma once

// Umbrella header for the DAMF library.

#include "damf/data_io.hpp"
#include "damf/estimators.hpp"
#include "damf/experiment.hpp"
#include "damf/metrics.hpp"
#include "damf/optim.hpp"
#include "damf/propensity.hpp"
#include "damf/rng.hpp"
#include "damf/synth.hpp"
#include "damf/trainers.hpp"
#include "damf/types.hpp"
