#pragma once

#include "ifdiff/checkpoint.hpp"
#include "ifdiff/config.hpp"
#include "ifdiff/denoiser.hpp"
#include "ifdiff/diffusion.hpp"
#include "ifdiff/errors.hpp"
#include "ifdiff/harness.hpp"
#include "ifdiff/layout.hpp"
#include "ifdiff/metrics.hpp"
#include "ifdiff/rng.hpp"
#include "ifdiff/schedule.hpp"
#include "ifdiff/tensor.hpp"
#include "ifdiff/training.hpp"
