#pragma once

// Umbrella include for the whole library.
#include "oprl/bases.hpp"
#include "oprl/bellman.hpp"
#include "oprl/config.hpp"
#include "oprl/errors.hpp"
#include "oprl/estimation.hpp"
#include "oprl/experiment.hpp"
#include "oprl/generators.hpp"
#include "oprl/io.hpp"
#include "oprl/model.hpp"
#include "oprl/planner.hpp"
#include "oprl/rkhs.hpp"
#include "oprl/rng.hpp"
#include "oprl/solver.hpp"
