#pragma once

#include "only/adaptive.hpp"
#include "only/baselines.hpp"
#include "only/bench.hpp"
#include "only/config.hpp"
#include "only/decode.hpp"
#include "only/errors.hpp"
#include "only/kernels.hpp"
#include "only/layout.hpp"
#include "only/method.hpp"
#include "only/model.hpp"
#include "only/model_io.hpp"
#include "only/prompt.hpp"
#include "only/sweep.hpp"
#include "only/te_branch.hpp"
#include "only/tver.hpp"
