#pragma once

#include "edgesim/rng.hpp"
#include "edgesim/channel.hpp"
#include "edgesim/data.hpp"
#include "edgesim/dataset.hpp"
#include "edgesim/learner.hpp"
#include "edgesim/centralized.hpp"
#include "edgesim/distributed.hpp"
#include "edgesim/config.hpp"
#include "edgesim/sweep.hpp"
