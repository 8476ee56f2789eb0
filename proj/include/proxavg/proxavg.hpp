#pragma once

#include "proxavg/adam.hpp"
#include "proxavg/checkpoint.hpp"
#include "proxavg/metrics.hpp"
#include "proxavg/network.hpp"
#include "proxavg/patches.hpp"
#include "proxavg/penalties.hpp"
#include "proxavg/pgm.hpp"
#include "proxavg/prox_check.hpp"
#include "proxavg/quantization.hpp"
#include "proxavg/reconstruct.hpp"
#include "proxavg/sensing.hpp"
#include "proxavg/solver.hpp"
#include "proxavg/tensor.hpp"
#include "proxavg/tensor_io.hpp"
#include "proxavg/training.hpp"
#include "proxavg/transforms.hpp"
