#include <doctest.h>

#include <cmath>
#include <random>

#include "kinlim/faddeeva.hpp"
#include "kinlim/penrose.hpp"

using namespace kinlim;

namespace {

EquilibriumDescriptor two_stream(double u) {
    EquilibriumDescriptor d;
    d.kind = EquilibriumKind::two_stream;
    d.u = u;
    return d;
}

// Brute-force Laplace transform of s mu~(kappa s) for a 1D mixture by Simpson's rule.
cplx brute_dispersion(const Equilibrium& eq, double kappa, cplx z) {
    const int n = 40000;
    const double smax = 40.0 / kappa, h = smax / n;
    cplx acc = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double s = i * h;
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        acc += w * s * eq.factor_transform(0, kappa * s) * std::exp(-z * s);
    }
    return 1.0 + acc * h / 3.0;
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= x.size();
    my /= x.size();
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += std::pow(std::log(x[i]) - mx, 2);
        sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    }
    return sxy / sxx;
}

}  // namespace

TEST_CASE("Faddeeva function reference values") {
    // Reference values from an independent implementation (Poppe-Wijers / scipy wofz).
    CHECK(std::abs(faddeeva_w({1, 1}) - cplx(0.30474420525691254, 0.2082189382028316)) < 1e-13);
    CHECK(std::abs(faddeeva_w({0.3, -2}) - cplx(35.910867305370004, 93.0471730882232)) < 1e-11);
    CHECK(std::abs(faddeeva_w({5, 0.01}) - cplx(0.0002408033919511768, 0.11524544620269582)) < 1e-12);
    CHECK(std::abs(faddeeva_w({0.2, -0.1}) - cplx(1.0743560128723888, 0.2628668323990021)) < 1e-13);
    CHECK(std::abs(faddeeva_w(0.0) - 1.0) < 1e-13);
}

TEST_CASE("symbol limits and closed form against brute-force Laplace integrals") {
    Equilibrium m(EquilibriumDescriptor{}, 1, 256, 10.0);
    Equilibrium ts(two_stream(2.4), 1, 512, 14.0);
    const int k1[1] = {1};
    for (double eps : {0.0, 0.1}) {
        PenroseSymbol ps;
        ps.eq = &m;
        ps.eps = eps;
        CHECK(std::abs(symbol(ps, 50.0, 0.0, k1) - 1.0) < 1e-3);
        CHECK(std::abs(symbol(ps, 50.0, 3.0, k1) - 1.0) < 1e-3);
        CHECK_THROWS_AS(symbol(ps, 0.0, 1.0, k1), Error);
        const int k0[1] = {0};
        CHECK_THROWS_AS(symbol(ps, 1.0, 1.0, k0), Error);
    }
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> g(0.05, 2.0), t(-5.0, 5.0);
    for (const Equilibrium* eq : {&m, &ts}) {
        PenroseSymbol ps;
        ps.eq = eq;
        for (int r = 0; r < 10; ++r) {
            const cplx z(g(rng), t(rng));
            const int k[1] = {1 + r % 3};
            CHECK(std::abs(dispersion(ps, z, k) - brute_dispersion(*eq, ps.kappa(k), z)) < 1e-9);
        }
    }
}

TEST_CASE("finite differences in gamma match the differentiated integrand") {
    Equilibrium m(EquilibriumDescriptor{}, 1, 256, 10.0);
    const int k[1] = {1};
    for (double eps : {0.0, 0.1}) {
        PenroseSymbol ps;
        ps.eq = &m;
        ps.eps = eps;
        for (double gam : {0.2, 0.7, 1.5})
            for (double tau : {-2.0, 0.3, 1.1}) {
                const double h = 1e-5;
                const cplx fd = (symbol(ps, gam + h, tau, k) - symbol(ps, gam - h, tau, k)) / (2 * h);
                CHECK(std::abs(fd - dispersion_derivative(ps, cplx(gam, tau), k)) < 1e-5);
            }
    }
}

TEST_CASE("Maxwellian is Penrose stable") {
    Equilibrium m(EquilibriumDescriptor{}, 1, 256, 10.0);
    PenroseSymbol ps;
    ps.eq = &m;
    std::vector<double> gam, tau;
    for (int i = 1; i <= 20; ++i) gam.push_back(0.1 * i);
    gam.insert(gam.begin(), 1e-3);
    for (int i = -40; i <= 40; ++i) tau.push_back(0.25 * i);
    std::vector<std::vector<int>> ks;
    for (int k = 1; k <= 8; ++k) ks.push_back({k});
    const auto rep = stability_margin(ps, ks, gam, tau);
    CHECK(rep.margin > 0.1);
    CHECK(rep.classification == Stability::stable);
    for (int w : rep.winding) CHECK(w == 0);
}

TEST_CASE("two-stream instability window and root certification") {
    Equilibrium ts(two_stream(2.4), 1, 512, 14.0);
    const std::vector<double> gam = {1e-3, 0.25, 0.5, 1.0, 2.0};
    std::vector<double> tau;
    for (int i = -40; i <= 40; ++i) tau.push_back(0.25 * i);
    PenroseSymbol ps;
    ps.eq = &ts;
    // Unstable long waves: kappa = 0.3 on a box of length 2 pi / 0.3.
    ps.box_length = 2 * pi / 0.3;
    auto rep = stability_margin(ps, {{1}}, gam, tau);
    CHECK(rep.classification == Stability::unstable);
    CHECK(rep.winding[0] == 1);
    REQUIRE(rep.roots.size() == 1);
    const cplx z = cplx(0.0, -1.0) * rep.roots[0].omega;
    CHECK(std::abs(brute_dispersion(ts, 0.3, z)) < 1e-8);
    CHECK(rep.roots[0].growth() == doctest::Approx(0.220).epsilon(0.01));
    CHECK(std::abs(rep.roots[0].omega.real()) < 1e-8);
    // kappa = 1 sits beyond the cutoff of this beam pair.
    ps.box_length = 2 * pi;
    rep = stability_margin(ps, {{1}}, gam, tau);
    CHECK(rep.winding[0] == 0);
    CHECK(rep.classification != Stability::unstable);
    const int k1[1] = {1};
    for (const auto& r : dispersion_roots(ps, k1)) CHECK(r.growth() < 0.0);
}

TEST_CASE("Landau root and the relativistic symbol") {
    Equilibrium m(EquilibriumDescriptor{}, 1, 512, 12.0);
    PenroseSymbol ps;
    ps.eq = &m;
    ps.box_length = 4 * pi;
    const int k[1] = {1};
    const auto roots = dispersion_roots(ps, k);
    REQUIRE(!roots.empty());
    CHECK(std::abs(roots[0].omega.real()) == doctest::Approx(1.4157).epsilon(1e-3));
    CHECK(roots[0].growth() == doctest::Approx(-0.1534).epsilon(1e-3));
    for (const auto& r : roots) CHECK(r.residual < 1e-8);
    // The sampled-kernel path at a negligible eps reproduces the closed form.
    PenroseSymbol tiny = ps;
    tiny.eps = 1e-9;
    const auto rt = dispersion_roots(tiny, k);
    REQUIRE(!rt.empty());
    for (const auto& r : roots) {
        if (r.growth() < -0.5) continue;
        double best = 1e300;
        for (const auto& q : rt) best = std::min(best, std::abs(q.omega - r.omega));
        CHECK(best < 1e-6);
    }

    // |symbol_eps - symbol_0| = O(eps^2).
    std::vector<double> eps = {0.2, 0.1, 0.05, 0.025}, diff;
    for (double e : eps) {
        PenroseSymbol pe = ps;
        pe.eps = e;
        diff.push_back(std::abs(symbol(pe, 0.3, 1.2, k) - symbol(ps, 0.3, 1.2, k)));
    }
    CHECK(slope(eps, diff) == doctest::Approx(2.0).epsilon(0.1));

    // Margin over a grid moves by at most C eps^2. The sampled minimum sits next to
    // the Landau root, so the asymptotic regime starts below eps = 0.2.
    std::vector<double> gam = {1e-3, 0.5, 1.0}, tau;
    for (int i = -20; i <= 20; ++i) tau.push_back(0.5 * i);
    const double m0 = stability_margin(ps, {{1}, {2}}, gam, tau).margin;
    std::vector<double> em = {0.2, 0.1, 0.05, 0.025}, dm;
    double C = 0.0;
    for (double e : em) {
        PenroseSymbol pe = ps;
        pe.eps = e;
        dm.push_back(std::abs(stability_margin(pe, {{1}, {2}}, gam, tau).margin - m0));
        C = std::max(C, dm.back() / (e * e));
    }
    CHECK(C < 3.0);
    CHECK(slope({0.1, 0.05, 0.025}, {dm[1], dm[2], dm[3]}) == doctest::Approx(2.0).epsilon(0.15));
}

TEST_CASE("anisotropic marginal along an oblique wavevector") {
    EquilibriumDescriptor an;
    an.kind = EquilibriumKind::anisotropic_product;
    an.sigmas = {0.8, 1.3};
    Equilibrium eq(an, 2, 64, 10.0);
    PenroseSymbol ps;
    ps.eq = &eq;
    const int k[2] = {1, 1};
    // Brute-force kernel -(i/kappa) int khat.grad mu e^{-i tau kappa khat.v} dv at eps = 0.
    const double kappa = ps.kappa(k), tau = 0.9;
    const auto& g = eq.v_grid();
    cplx acc = 0.0;
    double v[2], gr[2];
    for (int i = 0; i < g.size(); ++i) {
        g.coords(i, v);
        eq.gradient(v, gr);
        const double dot = (gr[0] + gr[1]) / std::sqrt(2.0), vk = (v[0] + v[1]) / std::sqrt(2.0);
        acc += dot * std::polar(1.0, -tau * kappa * vk) * g.cell_volume();
    }
    CHECK(std::abs(penrose_kernel(ps, tau, k) - cplx(0.0, -1.0 / kappa) * acc) < 1e-10);
}
