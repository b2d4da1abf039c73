#pragma once

#include "fpie/autodiff.hpp"
#include "fpie/bench.hpp"
#include "fpie/config.hpp"
#include "fpie/data.hpp"
#include "fpie/gradcheck.hpp"
#include "fpie/image_io.hpp"
#include "fpie/kernels.hpp"
#include "fpie/losses.hpp"
#include "fpie/metrics.hpp"
#include "fpie/models.hpp"
#include "fpie/ops.hpp"
#include "fpie/parallel.hpp"
#include "fpie/tensor.hpp"
#include "fpie/train.hpp"
#include "fpie/weights.hpp"
