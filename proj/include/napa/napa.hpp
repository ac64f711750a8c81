#pragma once

#include "napa/config.hpp"
#include "napa/csv.hpp"
#include "napa/grid.hpp"
#include "napa/normal.hpp"
#include "napa/parallel.hpp"
#include "napa/rng.hpp"
#include "napa/simulate.hpp"
#include "napa/statistics.hpp"
#include "napa/testing.hpp"
#include "napa/weights.hpp"
