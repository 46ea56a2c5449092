#pragma once

#include "cadam/diagnostics.hpp"
#include "cadam/meta/maml.hpp"
#include "cadam/meta/mlp.hpp"
#include "cadam/optimizers.hpp"
#include "cadam/problem.hpp"
#include "cadam/problems/portfolio.hpp"
#include "cadam/problems/quad_compose.hpp"
#include "cadam/rng.hpp"
#include "cadam/run.hpp"
#include "cadam/schedule.hpp"
#include "cadam/types.hpp"
