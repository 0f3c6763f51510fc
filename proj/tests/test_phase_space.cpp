#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "kinlim/phase_space.hpp"

using namespace kinlim;

namespace {

double gauss(double v) { return std::exp(-0.5 * v * v) / std::sqrt(2 * pi); }

DistField modulated(const PhaseGrid& g, double a, FieldRole role) {
    DistField f(g, role);
    const auto vg = g.velocity();
    double v[2];
    for (int ix = 0; ix < g.nx; ++ix)
        for (int iv = 0; iv < vg.size(); ++iv) {
            vg.coords(iv, v);
            double p = gauss(v[0]);
            if (g.dim_v == 2) p *= gauss(v[1]);
            f.slice(ix)[iv] = (1 + a * std::cos(2 * pi * ix / g.nx)) * p;
        }
    return f;
}

}  // namespace

TEST_CASE("grid validation") {
    CHECK_NOTHROW(PhaseGrid{16, 1.0, 2, 32, 6.0}.validate());
    CHECK_THROWS_AS(PhaseGrid({12, 1.0, 1, 32, 6.0}).validate(), Error);
    CHECK_THROWS_AS(PhaseGrid({16, 1.0, 3, 32, 6.0}).validate(), Error);
    CHECK_THROWS_AS(PhaseGrid({16, -1.0, 1, 32, 6.0}).validate(), Error);
}

TEST_CASE("moments of a modulated Maxwellian") {
    for (int dim : {1, 2}) {
        PhaseGrid g{16, 2 * pi, dim, 64, 9.0};
        const auto f = modulated(g, 0.3, FieldRole::full);
        const auto m = deposit_moments(f, 0.0, 4);
        for (int ix = 0; ix < g.nx; ++ix) {
            const double n = 1 + 0.3 * std::cos(2 * pi * ix / g.nx);
            CHECK(m.rho[ix] == doctest::Approx(n).epsilon(1e-12));
            for (int d = 0; d < dim; ++d) CHECK(std::abs(m.j.c[d][ix]) < 1e-13);
            // <v_1^2> = 1, <v_1^4> = 3 for the unit Maxwellian.
            CHECK(m.component(2, 2)[ix] == doctest::Approx(n).epsilon(1e-12));
            CHECK(m.component(4, 4)[ix] == doctest::Approx(3 * n).epsilon(1e-12));
            if (dim == 2) {
                CHECK(m.component(2, 0)[ix] == doctest::Approx(n).epsilon(1e-12));
                CHECK(std::abs(m.component(2, 1)[ix]) < 1e-13);
                CHECK(m.component(4, 2)[ix] == doctest::Approx(n).epsilon(1e-12));
            }
        }
        const int idx[2] = {0, dim - 1};
        CHECK(&m.tensor(idx) == &m.component(2, dim == 1 ? 2 : 1));
        CHECK(m.means[0][0] == doctest::Approx(1.0).epsilon(1e-12));

        // velocity_moment agrees with the deposit for relativistic weights too.
        const double eps = 0.3;
        const auto mr = deposit_moments(f, eps, 3);
        const auto direct = velocity_moment(f, eps, dim == 1 ? 3 : 2, dim == 1 ? 0 : 1);
        const auto& dep = mr.component(3, dim == 1 ? 3 : 2);
        for (int ix = 0; ix < g.nx; ++ix) CHECK(std::abs(direct[ix] - dep[ix]) < 1e-14);
    }
    PhaseGrid g{16, 1.0, 1, 32, 6.0};
    CHECK_THROWS_AS(velocity_moment(DistField(g, FieldRole::full), 0.0, 1, 1), Error);
}

TEST_CASE("g shift round trip and its effect on the current") {
    PhaseGrid g{16, 2 * pi, 2, 64, 9.0};
    EquilibriumDescriptor d;
    Equilibrium eq(d, 2, g.nv, g.vmax);
    auto f = modulated(g, 0.1, FieldRole::perturbation);
    VecField A(2, g.nx);
    for (int ix = 0; ix < g.nx; ++ix) {
        A.c[0][ix] = 0.2;
        A.c[1][ix] = std::sin(g.x(ix));
    }
    const double eps = 0.25;
    const auto gg = shift_to_g(f, A, eps, eq);
    const auto back = unshift_from_g(gg, A, eps, eq);
    double err = 0.0;
    for (std::size_t i = 0; i < f.values.size(); ++i) err = std::max(err, std::abs(back.values[i] - f.values[i]));
    CHECK(err < 1e-15);
    // j(g) = j(f) + eps Lambda A with Lambda = lambda Id for radial mu.
    const double lam = moment_constants(eq, eps).lambda;
    const auto jf = deposit_moments(f, eps, 1).j;
    const auto jg = deposit_moments(gg, eps, 1).j;
    for (int ix = 0; ix < g.nx; ++ix)
        for (int c = 0; c < 2; ++c) CHECK(std::abs(jg.c[c][ix] - jf.c[c][ix] - eps * lam * A.c[c][ix]) < 1e-12);
    CHECK_THROWS_AS(shift_to_g(modulated(g, 0.1, FieldRole::full), A, eps, eq), Error);
}

TEST_CASE("Sobolev norms against closed forms") {
    const int nx = 64;
    const double L = 4 * pi;
    Field u(nx);
    for (int i = 0; i < nx; ++i) u[i] = 2.0 + std::sin(3 * 2 * pi * i / nx);
    const double k2 = std::pow(2 * pi * 3 / L, 2);
    CHECK(l2_norm(u, L) == doctest::Approx(std::sqrt(4 * L + L / 2)).epsilon(1e-13));
    CHECK(hn_norm(u, L, 0) == doctest::Approx(l2_norm(u, L)).epsilon(1e-13));
    CHECK(hn_norm(u, L, 2) == doctest::Approx(std::sqrt(4 * L + (1 + k2 + k2 * k2) * L / 2)).epsilon(1e-13));
    CHECK(spatial_mean(u) == doctest::Approx(2.0).epsilon(1e-14));

    const std::vector<double> c(11, 4.0);
    const auto b = bootstrap_norm(c, 0.1);
    CHECK(b[0] == 0.0);
    CHECK(b[10] == doctest::Approx(2.0).epsilon(1e-14));

    PhaseGrid g{16, 2 * pi, 1, 64, 9.0};
    const auto f = modulated(g, 0.3, FieldRole::full);
    double s = 0.0;
    for (double x : f.values) s += x * x;
    CHECK(weighted_sobolev_norm(f, 0, 0.0) ==
          doctest::Approx(std::sqrt(s * g.dx() * g.velocity().cell_volume())).epsilon(1e-13));
    CHECK(weighted_sobolev_norm(f, 1, 2.0) > weighted_sobolev_norm(f, 0, 2.0));
}

TEST_CASE("snapshot round trip") {
    PhaseGrid g{16, 3.0, 2, 16, 5.0};
    auto f = modulated(g, 0.2, FieldRole::perturbation);
    const auto path = std::filesystem::temp_directory_path() / "kinlim_snapshot_test.bin";
    write_snapshot(path, f, 1.25, 0.1, 0.01);
    SnapshotHeader h;
    const auto r = read_snapshot(path, &h);
    CHECK(r.values == f.values);
    CHECK(h.grid.nx == 16);
    CHECK(h.grid.L == 3.0);
    CHECK(h.time == 1.25);
    CHECK(h.eps == 0.1);
    CHECK(h.delta == 0.01);
    CHECK(r.role == FieldRole::perturbation);
    std::filesystem::remove(path);
}
