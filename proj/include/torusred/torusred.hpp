#pragma once

#include "torusred/error.hpp"
#include "torusred/fourier.hpp"
#include "torusred/jet.hpp"
#include "torusred/bundle.hpp"
#include "torusred/models.hpp"
#include "torusred/reduction.hpp"
#include "torusred/sim.hpp"
#include "torusred/verify.hpp"
#include "torusred/cli.hpp"
