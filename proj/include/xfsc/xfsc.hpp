#pragma once

// Umbrella header.

#include "xfsc/analysis.hpp"
#include "xfsc/baselines.hpp"
#include "xfsc/error.hpp"
#include "xfsc/head.hpp"
#include "xfsc/io.hpp"
#include "xfsc/leep.hpp"
#include "xfsc/synth.hpp"
#include "xfsc/types.hpp"
