#pragma once

#include <complex>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "kinlim/common.hpp"
#include "kinlim/equilibria.hpp"
#include "kinlim/phase_space.hpp"
#include "kinlim/spectral_fields.hpp"
#include "kinlim/transport.hpp"

namespace kinlim {

enum class Model { vm, vp, vd };
const char* to_string(Model m);

enum class ModeShape { density, current1, current2, stress };

// delta f_0 contribution  amplitude cos(kappa_k x + phase) h(v), with h = mu,
// v_1 mu, v_2 mu or v_1 v_2 mu.
struct PerturbationMode {
    int k = 1;
    double amplitude = 0.0;
    double phase = 0.0;
    ModeShape shape = ModeShape::density;
};

// Transverse initial fields E_2 = e2 cos(kappa_k x), B_3 = b3 cos(kappa_k x),
// realised through A_2 and d_t A_2. Only used for unprepared data (p = 0).
struct FieldMode {
    int k = 1;
    double e2 = 0.0;
    double b3 = 0.0;
};

struct Perturbation {
    std::vector<PerturbationMode> f;
    std::vector<FieldMode> fields;
};

struct RunConfig {
    Model model = Model::vm;
    int darwin_order = 1;
    double eps = 0.1;
    double delta = 1e-3;
    double T_final = 5.0;
    double dt = 0.05;
    PhaseGrid grid;
    EquilibriumDescriptor equilibrium;
    Perturbation perturbation;
    // 0 (raw data) or 4, 6, 8.
    int prepared_order = 0;
    // Diagnostics every `output_every` steps.
    int output_every = 1;
    // Keep (E, B) on the x grid at every output step.
    bool record_fields = false;
    int snapshot_every = 0;
    std::filesystem::path out_dir;
    VInterp v_interp = VInterp::cubic_spline;
    int substeps = 1;
    bool mass_fix = true;

    int steps() const;
    void validate() const;
};

struct Diagnostics {
    std::vector<double> t;
    std::vector<double> charge;        // int rho(f) dx
    std::vector<double> continuity;    // ||d_t rho + d_x j_1||_2, centred in time; NaN at the ends
    std::vector<double> energy;        // int int e_eps f + (delta/2) int |E|^2 + |B|^2
    std::vector<double> field_energy;  // (1/2) int |E|^2 + |B|^2
    std::vector<double> e_norm;        // ||E||_2
    std::vector<double> b_norm;        // ||B||_2
    std::vector<double> field_hn;      // ||(E, B)||_{H^2}
    std::vector<cplx> e1_mode;         // Fourier coefficient of E_1 at the first perturbed mode
    std::vector<double> bootstrap;     // running bootstrap norm of (rho, j, m_2, m_3)(g)
    std::vector<double> mean_jg;       // |<j(g)>|
    std::vector<double> gauge;         // per-mode Coulomb gauge residual
    std::vector<double> gauss;         // max |d_x E_1 - rho|
    std::vector<double> boundary;      // largest |f| on the outer velocity layers
};

struct RunResult {
    DistField f;
    EMState em;
    Diagnostics diag;
    std::vector<double> hist_t;
    std::vector<VecField> E_hist;
    std::vector<Field> B_hist;
    bool aborted = false;
    bool leak = false;
    std::string message;
};

using StepObserver = std::function<void(double t, const DistField& f, const EMState& em)>;

RunResult vm_run(const RunConfig& cfg, const StepObserver& observe = {});
RunResult vp_run(const RunConfig& cfg, const StepObserver& observe = {});
RunResult vd_run(const RunConfig& cfg, const StepObserver& observe = {});
RunResult run_model(const RunConfig& cfg, const StepObserver& observe = {});

// delta f_0 from the perturbation descriptor (perturbation role).
DistField initial_perturbation(const RunConfig& cfg, const Equilibrium& eq);

// d_t int psi g dv for psi = vhat_1^p vhat_2^q, from the trace of the
// perturbation Vlasov equation with g = f - eps A.grad mu:
//   -d_x int psi vhat_1 f - d_x phi int d_1 psi mu + eps B int (d_1 psi vhat_2 - d_2 psi vhat_1) mu
//   + delta int grad psi . (E + eps vhat x B) f.
Field dt_moment_g(const DistField& f, const Equilibrium& eq, double eps, double delta, const Field& dphi,
                  const VecField& E, const Field& B, int p, int q);
// Same for f itself (no shift): -d_x int psi vhat_1 f + int grad psi.F mu + delta int grad psi.F f.
Field dt_moment_f(const DistField& f, const Equilibrium& eq, double eps, double delta, const VecField& E,
                  const Field& B, int p, int q);

struct PreparedData {
    DistField f0;
    EMState em;
    VecField E0;
    Field B0;
};

// Potentials and their time derivatives from the Darwin hierarchy at t = 0,
// truncated after A_1 for p = 4, 6 and after A_2 for p = 8.
PreparedData well_prepared_init(const RunConfig& cfg, int p);

// Norms (H^{n+1} for A, H^n for E, n = 2) of the conditions that
// characterise data prepared to order 4, 6 and 8.
struct PreparedResiduals {
    double a4 = 0.0, e4 = 0.0;  // ||A|0||, ||E0 + grad phi0||
    double a6 = 0.0;            // ||A|0 - eps (-Delta)^{-1} P j(f0)||
    double e8 = 0.0;            // ||(E0 + grad phi0) + eps^2 (-Delta)^{-1} P d_t j(f)|0||
    double r4() const { return a4 + e4; }
    double r6() const { return a6 + e4; }
    double r8() const { return a6 + e8; }
};
PreparedResiduals prepared_residuals(const RunConfig& cfg, const PreparedData& d);

// Full-variable state of the system with speed of light 1/eps:
// f = mu + delta f_pert, E = delta E_pert, B = delta B_pert.
struct FullState {
    DistField f;  // full role
    VecField E;
    Field B;
    double eps = 1.0;
    double t = 0.0;
};

FullState to_full_state(const DistField& f, const EMState& em, const Equilibrium& eq, double delta, double t);

// Velocity scaling: f' = lam^{d-2} f(t/lam, x, lam v), (E', B') = lam^{-2} (E, B), eps' = lam eps.
FullState rescale_velocity(const FullState& s, double lambda);
// Space-time scaling: f' = lam^{d-6} f(t/lam^3, x/lam^2, lam v), (E', B') = lam^{-4} (E, B),
// eps' = lam eps, box length lam^2 L.
FullState rescale_spacetime(const FullState& s, double lambda);

// Relative residuals of the full system at the middle state of three
// equally spaced snapshots (centred time differences). The background
// density is the spatial mean of rho.
struct SystemResidual {
    double vlasov = 0.0;
    double gauss = 0.0;
    double faraday = 0.0;
    double ampere = 0.0;
    double max() const;
};
SystemResidual system_residual(const FullState& prev, const FullState& mid, const FullState& next);

}  // namespace kinlim
