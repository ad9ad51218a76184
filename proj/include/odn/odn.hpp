#pragma once

#include "odn/common.hpp"
#include "odn/dataset.hpp"
#include "odn/classifier.hpp"
#include "odn/thresholds.hpp"
#include "odn/metrics.hpp"
#include "odn/config.hpp"
#include "odn/openworld.hpp"
#include "odn/experiments.hpp"
