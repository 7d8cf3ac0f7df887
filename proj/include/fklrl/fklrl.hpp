#pragma once

#include "fklrl/agent.hpp"
#include "fklrl/checkpoint.hpp"
#include "fklrl/config.hpp"
#include "fklrl/divergence.hpp"
#include "fklrl/envs.hpp"
#include "fklrl/evaluate.hpp"
#include "fklrl/metrics.hpp"
#include "fklrl/mlp.hpp"
#include "fklrl/networks.hpp"
#include "fklrl/optimizer.hpp"
#include "fklrl/replay.hpp"
#include "fklrl/sweep.hpp"
#include "fklrl/tabular.hpp"
#include "fklrl/traces.hpp"
#include "fklrl/train.hpp"
