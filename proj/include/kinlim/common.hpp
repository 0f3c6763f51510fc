#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace kinlim {

using cplx = std::complex<double>;
using Field = std::vector<double>;

inline constexpr double pi = 3.14159265358979323846;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace kinlim
