#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "kinlim/common.hpp"
#include "kinlim/equilibria.hpp"
#include "kinlim/phase_space.hpp"
#include "kinlim/penrose.hpp"

namespace kinlim {

// Density mode of the linearised free-transport system:
//   rho_k(t) + int_0^t K(t - s) rho_k(s) ds = S_k(t),
// with K the Laplace dual of the dispersion function, D = 1 + L[K].
struct VolterraProblem {
    std::vector<int> k;
    double dt = 0.05;
    double T = 20.0;
    std::vector<cplx> kernel;  // K(n dt), n = 0..steps
    std::vector<cplx> source;  // S(n dt)
    int steps() const { return static_cast<int>(kernel.size()) - 1; }
};

// K(k, tau) on a box of the given length.
cplx volterra_kernel(const Equilibrium& eq, double eps, std::span<const int> k, double tau,
                     double box_length = 2.0 * pi);

// Free streaming of the Fourier mode k of an initial perturbation f0 (rfft
// normalisation): S(t) = int f0_k(v) e^{-i t kappa vhat_1} dv.
std::vector<cplx> free_streaming_source(const DistField& f0, int k, double eps, double dt, int steps);

VolterraProblem make_volterra_problem(const Equilibrium& eq, double eps, const DistField& f0, int k, double dt,
                                      double T);

// Trapezoid marching; exact for the discrete equation.
std::vector<cplx> volterra_solve(const VolterraProblem& p);
// max_n |rho_n + trapezoid(K * rho)_n - S_n|
double volterra_residual(const VolterraProblem& p, std::span<const cplx> rho);

struct RateFit {
    // Series ~ C e^{rate t}: real part from log|.|, imaginary part from the unwrapped phase.
    cplx rate;
    double rms = 0.0;
};

// Least-squares fit on samples with t in [t0, t1]. Throws on a degenerate (flat) signal.
RateFit extract_rate(std::span<const double> t, std::span<const cplx> series, double t0, double t1);

// Decay or growth rate of a standing-wave signal from a log-linear fit to its
// local maxima of |u| inside [t0, t1].
double envelope_rate(std::span<const double> t, std::span<const double> u, double t0, double t1);

void write_series_csv(const std::filesystem::path& path, double dt, std::span<const cplx> rho);

}  // namespace kinlim
