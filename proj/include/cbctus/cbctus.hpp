#pragma once

#include <cbctus/calibration.hpp>
#include <cbctus/errors.hpp>
#include <cbctus/fusion.hpp>
#include <cbctus/geometry.hpp>
#include <cbctus/grid.hpp>
#include <cbctus/io.hpp>
#include <cbctus/phantom.hpp>
#include <cbctus/pipeline.hpp>
#include <cbctus/planner.hpp>
#include <cbctus/random.hpp>
#include <cbctus/serialization.hpp>
#include <cbctus/slice.hpp>
#include <cbctus/stats.hpp>
#include <cbctus/ussim.hpp>
#include <cbctus/vessel_segmentation.hpp>
