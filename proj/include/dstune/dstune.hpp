#pragma once

#include "dstune/benchmark.hpp"
#include "dstune/error.hpp"
#include "dstune/frames.hpp"
#include "dstune/generator.hpp"
#include "dstune/lti.hpp"
#include "dstune/model_io.hpp"
#include "dstune/nelder_mead.hpp"
#include "dstune/objective_value.hpp"
#include "dstune/shaping.hpp"
#include "dstune/sof.hpp"
