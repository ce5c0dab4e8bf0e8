#pragma once

#include "fpcirc/field_calculus.hpp"
#include "fpcirc/field_io.hpp"
#include "fpcirc/problem.hpp"
#include "fpcirc/fpe_operator.hpp"
#include "fpcirc/control_operators.hpp"
#include "fpcirc/flux.hpp"
#include "fpcirc/spectral_reduction.hpp"
#include "fpcirc/optimal_control.hpp"
#include "fpcirc/pde_solver.hpp"
#include "fpcirc/particle_sim.hpp"
#include "fpcirc/pipeline.hpp"
