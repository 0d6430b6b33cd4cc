#pragma once

#include "symalign/core.hpp"
#include "symalign/registration.hpp"
#include "symalign/simulate.hpp"
#include "symalign/fan_align.hpp"
#include "symalign/cone_align.hpp"
#include "symalign/io.hpp"
