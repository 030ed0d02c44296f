#pragma once

#include "basis.hpp"
#include "grid.hpp"
#include "integrals.hpp"
#include "processes.hpp"
#include "reconstruct.hpp"
#include "rng.hpp"
#include "runner.hpp"
#include "scenario.hpp"
#include "sfc.hpp"
