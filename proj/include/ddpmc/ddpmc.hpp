#pragma once

#include "ddpmc/copula.hpp"
#include "ddpmc/data.hpp"
#include "ddpmc/diagnostics.hpp"
#include "ddpmc/error.hpp"
#include "ddpmc/mcmc.hpp"
#include "ddpmc/model.hpp"
#include "ddpmc/numerics.hpp"
#include "ddpmc/posttau.hpp"
#include "ddpmc/rng.hpp"
#include "ddpmc/simulation.hpp"
#include "ddpmc/slice.hpp"
