#pragma once

// Umbrella header for the T-Riccati solver library.

#include "tric/types.hpp"
#include "tric/dense_core.hpp"
#include "tric/tsylv_dense.hpp"
#include "tric/riccati_dense.hpp"
#include "tric/lowrank_core.hpp"
#include "tric/tsylv_krylov.hpp"
#include "tric/riccati_lowrank.hpp"
#include "tric/generators.hpp"
#include "tric/io.hpp"
#include "tric/report.hpp"
#include "tric/bench.hpp"
