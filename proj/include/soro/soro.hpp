#pragma once

#include "soro/adjoint.hpp"
#include "soro/constitutive.hpp"
#include "soro/design.hpp"
#include "soro/error.hpp"
#include "soro/io.hpp"
#include "soro/linalg.hpp"
#include "soro/mpm.hpp"
#include "soro/optimizer.hpp"
#include "soro/prony.hpp"
#include "soro/scenario.hpp"
#include "soro/simulation.hpp"
#include "soro/surface.hpp"
