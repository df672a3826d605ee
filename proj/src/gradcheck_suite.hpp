#pragma once

#include <vector>

#include "gradcheck.hpp"

namespace cn::ad {

// The canonical verification set: every differentiable op plus the full
// dual-task network graph (frozen dropout masks, frozen L_reg coefficients),
// all in double precision. Sized to finish well under a minute.
std::vector<GradCheckReport> run_gradcheck_suite();

}  // namespace cn::ad
