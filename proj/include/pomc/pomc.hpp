#pragma once

#include "pomc/belief.hpp"
#include "pomc/control.hpp"
#include "pomc/errors.hpp"
#include "pomc/filter.hpp"
#include "pomc/grid.hpp"
#include "pomc/hjb.hpp"
#include "pomc/io.hpp"
#include "pomc/model.hpp"
#include "pomc/parallel.hpp"
#include "pomc/policy.hpp"
#include "pomc/simulate.hpp"
#include "pomc/solver.hpp"
#include "pomc/stats.hpp"
