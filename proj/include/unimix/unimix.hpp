// Umbrella header for the UniMix toolkit.

#pragma once

#include "unimix/cloud.hpp"
#include "unimix/config.hpp"
#include "unimix/io.hpp"
#include "unimix/metrics.hpp"
#include "unimix/mixing.hpp"
#include "unimix/model.hpp"
#include "unimix/pipeline.hpp"
#include "unimix/rng.hpp"
#include "unimix/synth.hpp"
#include "unimix/weather.hpp"
