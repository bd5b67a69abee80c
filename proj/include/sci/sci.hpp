#pragma once

#include "sci/dynamic.hpp"
#include "sci/errors.hpp"
#include "sci/estimator.hpp"
#include "sci/factor.hpp"
#include "sci/inference.hpp"
#include "sci/panel.hpp"
#include "sci/robust.hpp"
#include "sci/simulation.hpp"
#include "sci/stats.hpp"
