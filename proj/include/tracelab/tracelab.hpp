#pragma once

#include "tracelab/commands.hpp"
#include "tracelab/convergence.hpp"
#include "tracelab/core.hpp"
#include "tracelab/legacy.hpp"
#include "tracelab/packet.hpp"
#include "tracelab/ppm.hpp"
#include "tracelab/rng.hpp"
#include "tracelab/scenario.hpp"
#include "tracelab/spie.hpp"
#include "tracelab/topology.hpp"
