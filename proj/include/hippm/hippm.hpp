#pragma once

#include "hippm/alm.hpp"
#include "hippm/instance.hpp"
#include "hippm/operators.hpp"
#include "hippm/rates.hpp"
#include "hippm/schedules.hpp"
#include "hippm/solver.hpp"
#include "hippm/trace_csv.hpp"
#include "hippm/types.hpp"
