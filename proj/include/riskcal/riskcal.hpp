#pragma once

#include "riskcal/assessment.hpp"
#include "riskcal/calibration.hpp"
#include "riskcal/conformal.hpp"
#include "riskcal/core.hpp"
#include "riskcal/datagen.hpp"
#include "riskcal/error.hpp"
