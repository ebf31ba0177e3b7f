#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "oscbath/pde.hpp"
#include "oscbath/sde.hpp"

using namespace oscbath;

namespace {

DimensionlessParams const_scaled(double lambda, double mu) {
    ModelParams p;
    p.omega_minus = 1.0;
    p.omega_plus = 1.0;
    p.profile = FrequencyProfile::constant(1.0);
    p.eps_r = lambda;
    p.mu = mu;
    return scale(p);
}

GridSpec box(double u1m, double u2m, int n1, int n2) {
    GridSpec g;
    g.u1_max = u1m;
    g.u2_max = u2m;
    g.n1 = n1;
    g.n2 = n2;
    return g;
}

} // namespace

TEST_CASE("split_complex produces the decoupled sink pair") {
    auto [r, i] = split_complex(SinkSpec::complex_pair(0.5, 0.5));
    CHECK(r.p == 0.5);
    CHECK(r.k == 0.5);
    CHECK(i.p == 0.5);
    CHECK(i.k == -0.5);
    auto [r2, i2] = split_complex(SinkSpec::complex_pair(2.0, 0.0));
    CHECK(r2.k == i2.k);
    auto [r3, i3] = split_complex(SinkSpec::complex_pair(0.0, 1.0));
    CHECK(r3.k == 1.0);
    CHECK(i3.k == -1.0);
}

TEST_CASE("noiseless delta at the drift fixed point stays put") {
    auto sp = const_scaled(0.0, 0.0);
    GridSpec g = box(1.5, 2.5, 96, 96);
    DensityGrid f = delta_grid(g, 0.0, 1.0);
    const auto c0 = f.centroid();
    evolve(f, sp, SinkSpec::none(), 10.0, {.probability_type = true});
    const auto c1 = f.centroid();
    CHECK(std::abs(c1.first - c0.first) < g.h1());
    CHECK(std::abs(c1.second - c0.second) < g.h2());
    CHECK(f.integral() == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("contained runs conserve mass to 1e-6 per unit time") {
    auto sp = const_scaled(0.02, 0.2);
    SECTION("explicit slope-limited drift") {
        GridSpec g = box(6.0, 6.0, 128, 128);
        DensityGrid f = delta_grid(g, 0.0, 1.0);
        auto rep = evolve(f, sp, SinkSpec::none(), 1.5, {.probability_type = true});
        CHECK(rep.boundary_mass < 1e-8); // premise: support never reaches the edge
        CHECK(std::abs(f.integral() - 1.0) < 1.5e-6);
        CHECK(rep.min_value >= -1e-12);
    }
    SECTION("implicit upwind drift") {
        GridSpec g = box(6.0, 6.0, 96, 96);
        g.dt = 2e-3;
        DensityGrid f = delta_grid(g, 0.0, 1.0);
        auto rep = evolve(f, sp, SinkSpec::none(), 1.5,
                          {.drift = DriftScheme::UpwindImplicit, .probability_type = true});
        CHECK(rep.boundary_mass < 1e-7);
        CHECK(std::abs(f.integral() - 1.0) < 1.5e-6);
        CHECK(rep.min_value >= -1e-12);
    }
}

TEST_CASE("oversized explicit step is rejected") {
    auto sp = const_scaled(0.1, 0.0);
    GridSpec g = box(6.0, 6.0, 64, 64);
    DensityGrid f = delta_grid(g, 0.0, 1.0);
    PdeOptions opts;
    opts.dt_override = 0.1; // way beyond the advective bound
    CHECK_THROWS_AS(evolve(f, sp, SinkSpec::none(), 1.0, opts), NumericError);
}

TEST_CASE("kinetic solution matches the trajectory ensemble") {
    const double lam = 0.1;
    auto sp = const_scaled(lam, 0.0);
    GridSpec g = box(5.0, 8.0, 96, 128);
    DensityGrid f = delta_grid(g, 0.0, 1.0);

    auto ens = simulate_scaled(sp, 40000, 2e-3, 3.0, 2024, {1.0, 3.0});

    evolve(f, sp, SinkSpec::none(), 1.0, {.probability_type = true});
    auto mc1 = empirical_density(ens, g, 1.0);
    const double d1 = l1_distance(coarsen(f, 4), coarsen(mc1.density, 4));
    evolve(f, sp, SinkSpec::none(), 3.0, {.probability_type = true});
    auto mc3 = empirical_density(ens, g, 3.0);
    const double d3 = l1_distance(coarsen(f, 4), coarsen(mc3.density, 4));
    INFO("L1 distances " << d1 << " " << d3);
    CHECK(d1 < 0.07);
    CHECK(d3 < 0.07);
}

TEST_CASE("ground-state sink norm matches the weighted ensemble") {
    const double lam = 0.1;
    auto sp = const_scaled(lam, 0.0);
    GridSpec g = box(5.0, 8.0, 96, 128);
    DensityGrid f = delta_grid(g, 0.0, 1.0);
    evolve(f, sp, SinkSpec::q_index(0), 3.0, {.probability_type = true});

    auto ens = simulate_scaled(sp, 40000, 2e-3, 3.0, 77, {3.0});
    auto fk = feynman_kac(ens, 0, 3.0);
    INFO("pde " << f.integral() << " mc " << fk.norm << " +- " << fk.std_error);
    CHECK(std::abs(f.integral() - fk.norm) < 3.0 * fk.std_error + 5e-3);
}

TEST_CASE("complex field integral matches the complex-weight ensemble") {
    const double lam = 0.1;
    auto sp = const_scaled(lam, 0.0);
    GridSpec g = box(5.0, 8.0, 96, 128);
    ComplexGrid ups(g);
    ups.re = delta_grid(g, 0.0, 1.0);
    const SinkSpec sink = SinkSpec::complex_pair(0.5, 0.5);
    evolve(ups, sp, sink, 3.0);

    double ire = 0.0, iim = 0.0;
    for (std::size_t q = 0; q < ups.re.values.size(); ++q) {
        ire += ups.re.values[q];
        iim += ups.im.values[q];
    }
    ire *= g.cell_area();
    iim *= g.cell_area();

    auto ens = simulate_scaled(sp, 40000, 2e-3, 3.0, 4242, {3.0});
    auto fk = feynman_kac_complex(ens, 0.5, 0.5, 3.0);
    INFO("pde (" << ire << ", " << iim << ") mc (" << fk.mean.real() << ", " << fk.mean.imag()
                 << ") se (" << fk.se_re << ", " << fk.se_im << ")");
    CHECK(std::abs(ire - fk.mean.real()) < 3.0 * fk.se_re + 5e-3);
    CHECK(std::abs(iim - fk.mean.imag()) < 3.0 * fk.se_im + 5e-3);
}

TEST_CASE("moment convergence under grid refinement is at least first order") {
    auto sp = const_scaled(0.1, 0.0);
    auto moment = [&](int n) {
        GridSpec g = box(4.5, 7.0, n, n);
        DensityGrid f = delta_grid(g, 0.0, 1.0, 2.0 * 256.0 / n); // fixed physical width
        evolve(f, sp, SinkSpec::none(), 2.0, {.probability_type = true});
        double m = 0.0;
        for (int j = 0; j < g.n2; ++j)
            for (int i = 0; i < g.n1; ++i) m += g.u2(j) * f.at(i, j);
        return m * g.cell_area();
    };
    const double m1 = moment(64), m2 = moment(128), m3 = moment(256);
    const double order = std::log2(std::abs(m1 - m2) / std::abs(m2 - m3));
    INFO("moments " << m1 << " " << m2 << " " << m3 << ", order " << order);
    CHECK(order >= 1.0);
}

TEST_CASE("quasi-stationary profile concentrates at the fixed point for small noise") {
    auto sp = const_scaled(1e-3, 0.0);
    GridSpec g = box(1.5, 2.5, 96, 96);
    DensityGrid init = delta_grid(g, 0.0, 1.0);
    auto st = steady_state(init, sp, SinkSpec::q_index(0), 2e-3, 200.0);
    CHECK(st.converged);
    const auto c = st.field.abs_centroid();
    INFO("centroid |u1| " << c.first << " u2 " << c.second << " decay " << st.decay_rate);
    CHECK(c.first < 0.05);
    CHECK(std::abs(c.second - 1.0) < 0.05);
}

TEST_CASE("complex quasi-stationary field is normalizable and rotates steadily") {
    auto sp = const_scaled(0.1, 0.0);
    GridSpec g = box(4.0, 5.0, 96, 96);
    ComplexGrid init(g);
    init.re = delta_grid(g, 0.0, 1.0);
    auto st = steady_state(init, sp, SinkSpec::complex_pair(0.5, 0.5), 5e-3, 400.0);
    CHECK(st.converged);
    const double n2 = st.field.norm_l2_sq();
    CHECK(std::isfinite(n2));
    CHECK(n2 > 0.0);
    INFO("decay " << st.decay_rate << " rotation " << st.rotation_rate);
    CHECK(std::isfinite(st.rotation_rate));
}

TEST_CASE("thread count does not change the field evolution") {
    auto sp = const_scaled(0.08, 0.3);
    GridSpec g = box(5.0, 5.0, 64, 64);
    DensityGrid f1 = delta_grid(g, 0.0, 1.0);
    DensityGrid f2 = f1;
    thread_count() = 1;
    evolve(f1, sp, SinkSpec::q_index(0), 1.5, {.probability_type = true});
    thread_count() = 2;
    evolve(f2, sp, SinkSpec::q_index(0), 1.5, {.probability_type = true});
    thread_count() = 0;
    for (std::size_t q = 0; q < f1.values.size(); ++q) CHECK(f1.values[q] == f2.values[q]);
}
