#pragma once

#include "mdmisspec/core_model.hpp"
#include "mdmisspec/error.hpp"
#include "mdmisspec/fixtures.hpp"
#include "mdmisspec/harness.hpp"
#include "mdmisspec/inference.hpp"
#include "mdmisspec/json_io.hpp"
#include "mdmisspec/linalg.hpp"
#include "mdmisspec/posteriors.hpp"
#include "mdmisspec/quadrature.hpp"
#include "mdmisspec/radial_priors.hpp"
#include "mdmisspec/rng.hpp"
#include "mdmisspec/scenarios.hpp"
#include "mdmisspec/special_functions.hpp"
