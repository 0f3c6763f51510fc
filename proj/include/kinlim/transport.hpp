#pragma once

#include <map>
#include <memory>
#include <utility>

#include "kinlim/equilibria.hpp"
#include "kinlim/fft.hpp"
#include "kinlim/phase_space.hpp"
#include "kinlim/spectral_fields.hpp"

namespace kinlim {

enum class SplitScheme { strang, lie };
enum class VInterp { cubic_spline, spectral };

struct SplitStepPlan {
    double dt = 0.1;
    SplitScheme scheme = SplitScheme::strang;
    VInterp v_interp = VInterp::cubic_spline;
    // Sub-intervals of the backward characteristic in the v step.
    int substeps = 1;
    // Restore int f dv per x after the v step; the exact flow preserves it.
    bool mass_fix = true;
    void validate() const;
};

struct AdvectReport {
    // Largest |f| among the two outermost velocity layers before the step.
    double boundary_max = 0.0;
    bool leak = false;
};

// Holds FFT plans and per-grid tables; one instance per run.
class Transport {
public:
    Transport(const PhaseGrid& grid, const Equilibrium* eq);

    void advect_x(DistField& f, double eps, double dt);
    // f <- solution of d_t f + delta F.grad_v f = -F.grad_v mu (perturbation
    // role) or d_t f + F.grad_v f = 0 (full role) over dt, with
    // F = E + eps vhat x B frozen. In the full role delta is ignored.
    AdvectReport advect_v(DistField& f, const VecField& E, const Field& B, double eps, double delta, double dt,
                          const SplitStepPlan& plan);
    AdvectReport strang_step(DistField& f, const VecField& E, const Field& B, double eps, double delta,
                             const SplitStepPlan& plan);

    const PhaseGrid& grid() const { return grid_; }

private:
    const std::vector<cplx>& phase_table(double eps, double dt);
    void prefilter(double* c) const;
    double interpolate(const double* c, const double* v) const;

    PhaseGrid grid_;
    const Equilibrium* eq_;
    std::unique_ptr<StridedFFT> xfft_;
    std::map<std::pair<double, double>, std::vector<cplx>> phases_;
    std::vector<cplx> work_;
    std::vector<double> mass_weight_;
};

DistField advect_x(const DistField& f, double eps, double dt);
DistField advect_v(const DistField& f, const VecField& E, const Field& B, double eps, double delta, double dt,
                   const Equilibrium* eq, const SplitStepPlan& plan = {});
// x(dt/2) v(dt) x(dt/2) with fields derived from the potentials in `em`.
DistField strang_step(const DistField& f, const EMState& em, const SplitStepPlan& plan, const Equilibrium* eq,
                      double delta);

}  // namespace kinlim
