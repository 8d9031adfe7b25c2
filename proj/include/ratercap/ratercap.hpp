#pragma once

// Umbrella header.

#include "ratercap/capability.hpp"
#include "ratercap/common.hpp"
#include "ratercap/data.hpp"
#include "ratercap/estimation.hpp"
#include "ratercap/glm.hpp"
#include "ratercap/io.hpp"
#include "ratercap/linalg.hpp"
#include "ratercap/links.hpp"
#include "ratercap/model.hpp"
#include "ratercap/pipeline.hpp"
#include "ratercap/quadrature.hpp"
#include "ratercap/rng.hpp"
#include "ratercap/simulation.hpp"
