#pragma once

#include "fft.hpp"
#include "fixtures.hpp"
#include "grid.hpp"
#include "interp.hpp"
#include "io.hpp"
#include "optimizer.hpp"
#include "reaction_diffusion.hpp"
#include "registration.hpp"
#include "rng.hpp"
#include "spectral.hpp"
#include "transport.hpp"
#include "tumor.hpp"
