#pragma once

#include "psca/certify.hpp"
#include "psca/drivers.hpp"
#include "psca/errors.hpp"
#include "psca/experiment.hpp"
#include "psca/numerics.hpp"
#include "psca/params.hpp"
#include "psca/problems.hpp"
#include "psca/registry.hpp"
#include "psca/surrogates.hpp"
