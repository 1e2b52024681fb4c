#pragma once

#include "support/toy.hpp"

namespace avp::testing {

/// Scalar reduction sum(v * W) with W fixed by v's shape, so any tensor-valued
/// op can be gradient-checked through a scalar.
inline ad::Var project(const ad::Var& v) {
  Rng rng(0xC0FFEE + v.size());
  ad::Tensor w = random_tensor(rng, v.shape());
  return ad::sum(ad::mul(v, v.tape()->constant(w)));
}

}  // namespace avp::testing
