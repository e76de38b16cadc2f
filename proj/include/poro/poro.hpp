#pragma once
// Umbrella header.

#include "components.hpp"
#include "core.hpp"
#include "graph.hpp"
#include "io.hpp"
#include "iqa.hpp"
#include "mosaic.hpp"
#include "phantom.hpp"
#include "pipeline.hpp"
#include "registration.hpp"
#include "resample.hpp"
#include "segment.hpp"
#include "skeleton.hpp"
#include "stats.hpp"
#include "vesselness.hpp"
