#pragma once

#include "costshare/rational.hpp"
#include "costshare/errors.hpp"
#include "costshare/metric.hpp"
#include "costshare/routing.hpp"
#include "costshare/dual.hpp"
#include "costshare/dynamics.hpp"
#include "costshare/instances.hpp"
#include "costshare/io.hpp"
#include "costshare/experiment.hpp"
