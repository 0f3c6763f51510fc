#pragma once

#include "kinlim/common.hpp"

namespace kinlim {

// w(z) = exp(-z^2) erfc(-i z) on the whole complex plane. Upper half-plane
// values come from a 32-term rational approximation on the Cayley-mapped
// line; the lower half-plane uses w(z) = 2 exp(-z^2) - w(-z).
cplx faddeeva_w(cplx z);

}  // namespace kinlim
