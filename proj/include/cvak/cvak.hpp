#pragma once

#include "cvak/attacks.hpp"
#include "cvak/autodiff.hpp"
#include "cvak/binary_io.hpp"
#include "cvak/data.hpp"
#include "cvak/error.hpp"
#include "cvak/harness.hpp"
#include "cvak/models.hpp"
#include "cvak/parallel.hpp"
#include "cvak/phase_attacks.hpp"
#include "cvak/rng.hpp"
#include "cvak/tensor.hpp"
#include "cvak/verify.hpp"

namespace cvak {
inline constexpr const char* version = "0.1.0";
}
