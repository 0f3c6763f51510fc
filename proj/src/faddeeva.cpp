#include "kinlim/faddeeva.hpp"

#include <array>
#include <cmath>

namespace kinlim {

namespace {

constexpr int terms = 32;

struct Coefficients {
    std::array<double, terms> a{};
    double L = 0.0;
};

// Expansion coefficients of (L^2 + t^2) exp(-t^2) in the basis ((L + it)/(L - it))^n.
Coefficients make_coefficients() {
    Coefficients c;
    const int M = 2 * terms, M2 = 2 * M;
    c.L = std::sqrt(terms / std::sqrt(2.0));
    std::vector<double> f(M2, 0.0);
    for (int k = -M + 1; k <= M - 1; ++k) {
        const double t = c.L * std::tan(0.5 * k * pi / M);
        f[k + M] = std::exp(-t * t) * (c.L * c.L + t * t);
    }
    // fftshift, then the real part of an unnormalised DFT.
    std::vector<double> g(M2);
    for (int i = 0; i < M2; ++i) g[i] = f[(i + M) % M2];
    for (int n = 1; n <= terms; ++n) {
        double s = 0.0;
        for (int i = 0; i < M2; ++i) s += g[i] * std::cos(2.0 * pi * n * i / M2);
        c.a[n - 1] = s / M2;
    }
    return c;
}

cplx upper(cplx z) {
    static const Coefficients c = make_coefficients();
    const cplx iz(-z.imag(), z.real());
    const cplx den = c.L - iz;
    const cplx Z = (c.L + iz) / den;
    cplx p = 0.0;
    for (int n = terms - 1; n >= 0; --n) p = p * Z + c.a[n];
    return 2.0 * p / (den * den) + 1.0 / (std::sqrt(pi) * den);
}

}  // namespace

cplx faddeeva_w(cplx z) {
    if (z.imag() >= 0.0) return upper(z);
    return 2.0 * std::exp(-z * z) - upper(-z);
}

}  // namespace kinlim
