#pragma once

#include "brql/rng.hpp"
#include "brql/mdp.hpp"
#include "brql/environments.hpp"
#include "brql/posterior.hpp"
#include "brql/risk.hpp"
#include "brql/learner.hpp"
#include "brql/oracle.hpp"
#include "brql/baselines.hpp"
#include "brql/config.hpp"
#include "brql/harness.hpp"
