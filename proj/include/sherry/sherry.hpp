// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "sherry/bench.hpp"
#include "sherry/bitpack.hpp"
#include "sherry/commands.hpp"
#include "sherry/diagnostics.hpp"
#include "sherry/error.hpp"
#include "sherry/formats.hpp"
#include "sherry/granularity.hpp"
#include "sherry/lut_engine.hpp"
#include "sherry/matrix.hpp"
#include "sherry/quant.hpp"
#include "sherry/schedule.hpp"
#include "sherry/trace_io.hpp"
#include "sherry/trainer.hpp"
