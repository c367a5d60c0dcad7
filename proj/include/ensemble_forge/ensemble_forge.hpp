#pragma once

#include "ensemble_forge/covariance.hpp"
#include "ensemble_forge/deformation.hpp"
#include "ensemble_forge/distributions.hpp"
#include "ensemble_forge/error.hpp"
#include "ensemble_forge/goodness.hpp"
#include "ensemble_forge/marketdata.hpp"
#include "ensemble_forge/montecarlo.hpp"
#include "ensemble_forge/optimize.hpp"
#include "ensemble_forge/parallel.hpp"
#include "ensemble_forge/quadrature.hpp"
#include "ensemble_forge/rng.hpp"
#include "ensemble_forge/serialize.hpp"
#include "ensemble_forge/specfun.hpp"
