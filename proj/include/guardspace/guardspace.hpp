#pragma once

// Convenience umbrella: the full pipeline plus the experiment harness.

#include "guardspace/matrix.hpp"
#include "guardspace/linalg.hpp"
#include "guardspace/subspace.hpp"
#include "guardspace/nullspace.hpp"
#include "guardspace/model.hpp"
#include "guardspace/trainer.hpp"
#include "guardspace/synthetic.hpp"
#include "guardspace/tensor_io.hpp"
#include "guardspace/checkpoint.hpp"
#include "guardspace/report.hpp"
#include "guardspace/config.hpp"
