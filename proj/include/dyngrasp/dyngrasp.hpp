#pragma once

#include "annotation.hpp"
#include "constants.hpp"
#include "error.hpp"
#include "evaluation.hpp"
#include "extra_trees.hpp"
#include "features.hpp"
#include "filter.hpp"
#include "ggs.hpp"
#include "io.hpp"
#include "pipeline.hpp"
#include "random.hpp"
#include "signal_pipeline.hpp"
#include "synth.hpp"
