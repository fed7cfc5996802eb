#pragma once

#include "vibroline/error.hpp"
#include "vibroline/ifcfit.hpp"
#include "vibroline/model.hpp"
#include "vibroline/parallel.hpp"
#include "vibroline/phonons.hpp"
#include "vibroline/thermal.hpp"
#include "vibroline/unfold.hpp"
#include "vibroline/units.hpp"
#include "vibroline/vibronic.hpp"
