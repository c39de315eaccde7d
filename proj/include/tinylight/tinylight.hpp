#pragma once

#include "tinylight/common.hpp"
#include "tinylight/scenario.hpp"
#include "tinylight/builders.hpp"
#include "tinylight/simulator.hpp"
#include "tinylight/features.hpp"
#include "tinylight/tensor.hpp"
#include "tinylight/tape.hpp"
#include "tinylight/optimizer.hpp"
#include "tinylight/supergraph.hpp"
#include "tinylight/mlp.hpp"
#include "tinylight/replay.hpp"
#include "tinylight/dqn.hpp"
#include "tinylight/control.hpp"
#include "tinylight/search.hpp"
#include "tinylight/resource.hpp"
#include "tinylight/codegen.hpp"
#include "tinylight/harness.hpp"
#include "tinylight/checkpoint.hpp"
#include "tinylight/experiment.hpp"
