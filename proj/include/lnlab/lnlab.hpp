#pragma once

#include "lnlab/bounds.hpp"
#include "lnlab/common.hpp"
#include "lnlab/config.hpp"
#include "lnlab/dynamics.hpp"
#include "lnlab/experiments.hpp"
#include "lnlab/fit.hpp"
#include "lnlab/measure.hpp"
#include "lnlab/problems.hpp"
#include "lnlab/results.hpp"
#include "lnlab/rng.hpp"
#include "lnlab/transport.hpp"
