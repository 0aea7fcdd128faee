#pragma once

#include "unsat/anderson.hpp"
#include "unsat/assembly.hpp"
#include "unsat/constitutive.hpp"
#include "unsat/experiment.hpp"
#include "unsat/grid.hpp"
#include "unsat/hyperdual.hpp"
#include "unsat/linalg.hpp"
#include "unsat/mms.hpp"
#include "unsat/problem.hpp"
#include "unsat/solvers.hpp"
