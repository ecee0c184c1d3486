#pragma once

#include "flatsat/adaptive.hpp"
#include "flatsat/flat_model.hpp"
#include "flatsat/geometry.hpp"
#include "flatsat/linalg.hpp"
#include "flatsat/lmi.hpp"
#include "flatsat/parallel.hpp"
#include "flatsat/saturation.hpp"
#include "flatsat/simulator.hpp"
#include "flatsat/terminal.hpp"
#include "flatsat/types.hpp"
#include "flatsat/verify.hpp"
