// mcfqkd.hpp
// Umbrella header.

#pragma once

#include "channel.hpp"
#include "config.hpp"
#include "csv.hpp"
#include "fringes.hpp"
#include "keyrate.hpp"
#include "linksim.hpp"
#include "optimizer.hpp"
#include "prbs.hpp"
#include "random.hpp"
#include "reference_points.hpp"
#include "stabilizer.hpp"
#include "states.hpp"
