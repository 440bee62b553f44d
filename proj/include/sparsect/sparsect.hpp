#pragma once

#include "sparsect/autodiff.hpp"
#include "sparsect/checkpoint.hpp"
#include "sparsect/config.hpp"
#include "sparsect/dataset.hpp"
#include "sparsect/error.hpp"
#include "sparsect/evaluate.hpp"
#include "sparsect/fbp.hpp"
#include "sparsect/half.hpp"
#include "sparsect/io.hpp"
#include "sparsect/metrics.hpp"
#include "sparsect/model.hpp"
#include "sparsect/ops.hpp"
#include "sparsect/phantom.hpp"
#include "sparsect/precision.hpp"
#include "sparsect/projector.hpp"
#include "sparsect/rng.hpp"
#include "sparsect/tensor.hpp"
#include "sparsect/trainer.hpp"
