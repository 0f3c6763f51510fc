#include "kinlim/transport.hpp"

#include <cmath>

namespace kinlim {

void SplitStepPlan::validate() const {
    if (!(dt > 0.0)) throw Error("split-step plan: dt must be positive");
    if (substeps < 1) throw Error("split-step plan: substeps must be >= 1");
}

namespace {

constexpr double spline_pole = -0.26794919243112270648;  // sqrt(3) - 2

// Periodic cubic B-spline coefficients of the samples c[0], c[stride], ...
void prefilter_line(double* c, int n, int stride) {
    const double z = spline_pole;
    const double zn = std::pow(z, n);
    double acc = 0.0, zk = 1.0;
    for (int k = 0; k < n; ++k) {
        acc += zk * 6.0 * c[((n - k) % n) * stride];
        zk *= z;
    }
    std::vector<double> cp(n);
    cp[0] = acc / (1.0 - zn);
    for (int i = 1; i < n; ++i) cp[i] = 6.0 * c[i * stride] + z * cp[i - 1];
    acc = 0.0;
    zk = 1.0;
    for (int k = 0; k < n; ++k) {
        acc += zk * cp[(n - 1 + k) % n];
        zk *= z;
    }
    c[(n - 1) * stride] = -z * acc / (1.0 - zn);
    for (int i = n - 2; i >= 0; --i) c[i * stride] = z * (c[(i + 1) * stride] - cp[i]);
}

void bspline_weights(double t, double w[4]) {
    const double t2 = t * t, t3 = t2 * t;
    w[0] = (1.0 - t) * (1.0 - t) * (1.0 - t) / 6.0;
    w[1] = (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0;
    w[2] = (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0;
    w[3] = t3 / 6.0;
}

// Lorentz force E + eps vhat x B at velocity v (1D: E only).
inline void force(int dim, const double* E, double B, double eps, const double* v, double* F) {
    if (dim == 1) {
        F[0] = E[0];
        return;
    }
    const double ig = 1.0 / std::sqrt(1.0 + eps * eps * (v[0] * v[0] + v[1] * v[1]));
    F[0] = E[0] + eps * v[1] * ig * B;
    F[1] = E[1] - eps * v[0] * ig * B;
}

}  // namespace

Transport::Transport(const PhaseGrid& grid, const Equilibrium* eq) : grid_(grid), eq_(eq) {
    grid_.validate();
    if (eq_ && (eq_->dim_v() != grid_.dim_v)) throw Error("transport: equilibrium and grid dimensions differ");
    xfft_ = std::make_unique<StridedFFT>(grid_.nx, grid_.nv_total());
    work_.resize(static_cast<std::size_t>(grid_.nx / 2 + 1) * grid_.nv_total());
    const auto vg = grid_.velocity();
    mass_weight_.resize(vg.size());
    double v[3];
    double s = 0.0;
    for (int iv = 0; iv < vg.size(); ++iv) {
        vg.coords(iv, v);
        double v2 = 0.0;
        for (int d = 0; d < vg.dim; ++d) v2 += v[d] * v[d];
        mass_weight_[iv] = std::exp(-0.5 * v2);
        s += mass_weight_[iv];
    }
    for (auto& w : mass_weight_) w /= s;
}

const std::vector<cplx>& Transport::phase_table(double eps, double dt) {
    auto key = std::make_pair(eps, dt);
    auto it = phases_.find(key);
    if (it != phases_.end()) return it->second;
    if (phases_.size() > 8) phases_.clear();
    const auto vg = grid_.velocity();
    const int nvt = vg.size();
    const int nc = grid_.nx / 2 + 1;
    std::vector<cplx> t(static_cast<std::size_t>(nc) * nvt);
    double v[3], vh[3];
    for (int iv = 0; iv < nvt; ++iv) {
        vg.coords(iv, v);
        rel_velocity({v, static_cast<std::size_t>(vg.dim)}, eps, {vh, static_cast<std::size_t>(vg.dim)});
        for (int k = 0; k < nc; ++k) {
            const double a = -grid_.kappa(k) * vh[0] * dt;
            t[static_cast<std::size_t>(k) * nvt + iv] = (k == grid_.nx / 2) ? 0.0 : std::polar(1.0, a);
        }
    }
    return phases_.emplace(key, std::move(t)).first->second;
}

void Transport::advect_x(DistField& f, double eps, double dt) {
    const auto& ph = phase_table(eps, dt);
    xfft_->forward(f.values.data(), work_.data());
    for (std::size_t i = 0; i < work_.size(); ++i) work_[i] *= ph[i];
    xfft_->backward(work_.data(), f.values.data());
}

void Transport::prefilter(double* c) const {
    const int n = grid_.nv;
    if (grid_.dim_v == 1) {
        prefilter_line(c, n, 1);
        return;
    }
    for (int i = 0; i < n; ++i) prefilter_line(c + i * n, n, 1);
    for (int j = 0; j < n; ++j) prefilter_line(c + j, n, n);
}

double Transport::interpolate(const double* c, const double* v) const {
    const int n = grid_.nv;
    const double h = 2.0 * grid_.vmax / n;
    const double v0 = -grid_.vmax + 0.5 * h;
    int idx[2] = {0, 0};
    double w[2][4] = {};
    for (int d = 0; d < grid_.dim_v; ++d) {
        if (v[d] < -grid_.vmax || v[d] > grid_.vmax) return 0.0;
        const double s = (v[d] - v0) / h;
        const double fl = std::floor(s);
        idx[d] = static_cast<int>(fl);
        bspline_weights(s - fl, w[d]);
    }
    auto wrap = [n](int i) { return ((i % n) + n) % n; };
    if (grid_.dim_v == 1) {
        double r = 0.0;
        for (int a = 0; a < 4; ++a) r += w[0][a] * c[wrap(idx[0] - 1 + a)];
        return r;
    }
    double r = 0.0;
    for (int a = 0; a < 4; ++a) {
        const double* row = c + wrap(idx[0] - 1 + a) * n;
        double s = 0.0;
        for (int b = 0; b < 4; ++b) s += w[1][b] * row[wrap(idx[1] - 1 + b)];
        r += w[0][a] * s;
    }
    return r;
}

AdvectReport Transport::advect_v(DistField& f, const VecField& E, const Field& B, double eps, double delta,
                                 double dt, const SplitStepPlan& plan) {
    plan.validate();
    const bool pert = f.role == FieldRole::perturbation;
    if (pert && !eq_) throw Error("advect_v: perturbation role needs the equilibrium");
    const int dim = grid_.dim_v;
    const int n = grid_.nv;
    const auto vg = grid_.velocity();
    const int nvt = vg.size();
    const double scale = pert ? delta : 1.0;
    bool has_b = false;
    if (dim == 2)
        for (double b : B) has_b = has_b || b != 0.0;
    if (plan.v_interp == VInterp::spectral && has_b && eps != 0.0)
        throw Error("advect_v: spectral interpolation needs a velocity-independent displacement (B = 0)");

    AdvectReport rep;
    std::vector<double> coef(nvt), out(nvt);
    const int m = plan.substeps;
    const double h = dt / m;
    double v[2], Vh[2], Vf[2], F[2], Fh[2], Ff[2], g[2], Ex[2];

    for (int ix = 0; ix < grid_.nx; ++ix) {
        double* s = f.slice(ix);
        for (int iv = 0; iv < nvt; ++iv) {
            int i0 = dim == 1 ? iv : iv / n, i1 = dim == 1 ? 0 : iv % n;
            const bool edge = i0 < 2 || i0 >= n - 2 || (dim == 2 && (i1 < 2 || i1 >= n - 2));
            if (edge) rep.boundary_max = std::max(rep.boundary_max, std::abs(s[iv]));
        }
        for (int d = 0; d < dim; ++d) Ex[d] = E.c[d][ix];
        const double Bx = dim == 2 ? B[ix] : 0.0;
        double mass_before = 0.0;
        for (int iv = 0; iv < nvt; ++iv) mass_before += s[iv];

        if (plan.v_interp == VInterp::spectral) {
            // Uniform displacement: exact Fourier shift per velocity line.
            Field line(n);
            std::copy(s, s + nvt, out.begin());
            for (int d = 0; d < dim; ++d) {
                const double disp = scale * Ex[d] * dt;
                const int stride = (dim == 2 && d == 0) ? n : 1;
                const int lines = nvt / n;
                for (int l = 0; l < lines; ++l) {
                    const int base = (dim == 2 && d == 0) ? l : l * n;
                    for (int i = 0; i < n; ++i) line[i] = out[base + i * stride];
                    auto lh = rfft(line);
                    for (int k = 0; k <= n / 2; ++k) {
                        const double xi = 2.0 * pi * k / (2.0 * grid_.vmax);
                        lh[k] *= (k == n / 2) ? cplx(std::cos(xi * disp)) : std::polar(1.0, -xi * disp);
                    }
                    line = irfft(lh, n);
                    for (int i = 0; i < n; ++i) out[base + i * stride] = line[i];
                }
            }
        } else {
            std::copy(s, s + nvt, coef.begin());
            prefilter(coef.data());
        }

        for (int iv = 0; iv < nvt; ++iv) {
            vg.coords(iv, v);
            double src = 0.0;
            double cur[2] = {v[0], dim == 2 ? v[1] : 0.0};
            for (int sub = 0; sub < m; ++sub) {
                force(dim, Ex, Bx, eps, cur, F);
                for (int d = 0; d < dim; ++d) Vh[d] = cur[d] - 0.5 * h * scale * F[d];
                force(dim, Ex, Bx, eps, Vh, Fh);
                for (int d = 0; d < dim; ++d) Vf[d] = cur[d] - h * scale * Fh[d];
                if (pert) {
                    force(dim, Ex, Bx, eps, Vf, Ff);
                    double a = 0.0, b = 0.0, c = 0.0;
                    eq_->gradient(cur, g);
                    for (int d = 0; d < dim; ++d) a += F[d] * g[d];
                    eq_->gradient(Vh, g);
                    for (int d = 0; d < dim; ++d) b += Fh[d] * g[d];
                    eq_->gradient(Vf, g);
                    for (int d = 0; d < dim; ++d) c += Ff[d] * g[d];
                    src += h / 6.0 * (a + 4.0 * b + c);
                }
                for (int d = 0; d < dim; ++d) cur[d] = Vf[d];
            }
            double val;
            if (plan.v_interp == VInterp::spectral) val = out[iv];
            else val = interpolate(coef.data(), cur);
            out[iv] = val - src;
        }
        if (plan.mass_fix) {
            double mass_after = 0.0;
            for (int iv = 0; iv < nvt; ++iv) mass_after += out[iv];
            const double defect = mass_before - mass_after;
            for (int iv = 0; iv < nvt; ++iv) out[iv] += defect * mass_weight_[iv];
        }
        std::copy(out.begin(), out.end(), s);
    }
    rep.leak = rep.boundary_max > 1e-8;
    return rep;
}

AdvectReport Transport::strang_step(DistField& f, const VecField& E, const Field& B, double eps, double delta,
                                    const SplitStepPlan& plan) {
    plan.validate();
    if (plan.scheme == SplitScheme::lie) {
        advect_x(f, eps, plan.dt);
        return advect_v(f, E, B, eps, delta, plan.dt, plan);
    }
    advect_x(f, eps, 0.5 * plan.dt);
    auto rep = advect_v(f, E, B, eps, delta, plan.dt, plan);
    advect_x(f, eps, 0.5 * plan.dt);
    return rep;
}

DistField advect_x(const DistField& f, double eps, double dt) {
    Transport t(f.grid, nullptr);
    DistField out = f;
    t.advect_x(out, eps, dt);
    return out;
}

DistField advect_v(const DistField& f, const VecField& E, const Field& B, double eps, double delta, double dt,
                   const Equilibrium* eq, const SplitStepPlan& plan) {
    Transport t(f.grid, eq);
    DistField out = f;
    t.advect_v(out, E, B, eps, delta, dt, plan);
    return out;
}

DistField strang_step(const DistField& f, const EMState& em, const SplitStepPlan& plan, const Equilibrium* eq,
                      double delta) {
    Transport t(f.grid, eq);
    DistField out = f;
    t.strang_step(out, em.E(), em.B(), em.eps, delta, plan);
    return out;
}

}  // namespace kinlim
