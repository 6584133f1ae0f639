#pragma once

#include "mcbf/conic/embed.hpp"
#include "mcbf/conic/outer_approx.hpp"
#include "mcbf/conic/program.hpp"
#include "mcbf/conic/solver.hpp"
