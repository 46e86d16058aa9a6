#pragma once

#include "biphoton/error.hpp"
#include "biphoton/units.hpp"
#include "biphoton/dispersion.hpp"
#include "biphoton/materials_io.hpp"
#include "biphoton/multilayer.hpp"
#include "biphoton/stack_io.hpp"
#include "biphoton/spectrum.hpp"
#include "biphoton/spdc_model.hpp"
#include "biphoton/fiber.hpp"
#include "biphoton/detector.hpp"
#include "biphoton/timetag.hpp"
#include "biphoton/tagsim.hpp"
#include "biphoton/coincidence.hpp"
#include "biphoton/reconstruct.hpp"
#include "biphoton/presets.hpp"
#include "biphoton/pipeline.hpp"
