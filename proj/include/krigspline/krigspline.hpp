#pragma once

#include "krigspline/errors.hpp"
#include "krigspline/geometry.hpp"
#include "krigspline/linalg.hpp"
#include "krigspline/trend.hpp"
#include "krigspline/variogram.hpp"
#include "krigspline/kriging.hpp"
#include "krigspline/spline.hpp"
#include "krigspline/simulate.hpp"
#include "krigspline/crossval.hpp"
