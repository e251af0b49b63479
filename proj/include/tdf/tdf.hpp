#pragma once

// Umbrella header for the library part (the CLI layer lives in tdf/cli.hpp).

#include "tdf/baselines.hpp"
#include "tdf/csv.hpp"
#include "tdf/data.hpp"
#include "tdf/differencing.hpp"
#include "tdf/error.hpp"
#include "tdf/eval.hpp"
#include "tdf/featsel.hpp"
#include "tdf/linalg.hpp"
#include "tdf/optimize.hpp"
#include "tdf/parallel.hpp"
#include "tdf/pipelines.hpp"
#include "tdf/random.hpp"
#include "tdf/sarimax.hpp"
#include "tdf/search.hpp"
#include "tdf/stattests.hpp"
#include "tdf/tree.hpp"
