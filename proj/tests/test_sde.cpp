#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "oscbath/sde.hpp"
#include "oscbath/threading.hpp"

using namespace oscbath;
using namespace std::complex_literals;

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

DimensionlessParams step_scaled(double wm, double wp, double lambda, double mu, double t0) {
    ModelParams p;
    p.omega_minus = wm;
    p.omega_plus = wp;
    p.profile = FrequencyProfile::step(wm, wp);
    p.eps_r = lambda * wp * wp * wp;
    p.mu = mu;
    p.t0 = t0;
    return scale(p);
}

} // namespace

TEST_CASE("noiseless constant profile sits on the drift fixed point") {
    auto sp = const_scaled(0.0, 0.0);
    auto ens = simulate_scaled(sp, 16, 1e-3, 5.0, 42, {1.0, 5.0});
    for (std::size_t k = 0; k < ens.snap_times.size(); ++k)
        for (std::size_t i = 0; i < ens.n_traj; ++i) {
            CHECK(std::abs(ens.snapshots[k][i].u1) < 1e-12);
            CHECK(std::abs(ens.snapshots[k][i].u2 - 1.0) < 1e-12);
        }
    CHECK(ens.divergence_rate == 0.0);
}

TEST_CASE("noiseless ensembles have zero spread and exact initial condition") {
    auto sp = step_scaled(1.0, 2.0, 0.0, 0.0, -2.0);
    auto ens = simulate_scaled(sp, 64, 1e-3, 6.0, 7, {sp.t0_bar, 1.0, 6.0});
    // Snapshot at t0: all trajectories exactly at (0, omega_minus/omega_plus).
    for (std::size_t i = 0; i < ens.n_traj; ++i) {
        CHECK(ens.snapshots[0][i].u1 == 0.0);
        CHECK(ens.snapshots[0][i].u2 == 0.5);
    }
    // Later snapshots: all trajectories identical (single deterministic path).
    for (std::size_t k = 1; k < ens.snap_times.size(); ++k)
        for (std::size_t i = 1; i < ens.n_traj; ++i) {
            CHECK(ens.snapshots[k][i].u1 == ens.snapshots[k][0].u1);
            CHECK(ens.snapshots[k][i].u2 == ens.snapshots[k][0].u2);
        }
}

TEST_CASE("noiseless step trajectory follows the classical logarithmic derivative") {
    // Matching oracle for the sudden step (scaled units): xi = A e^{it} + B e^{-it}
    // with A, B from continuity at the jump, u = xi'/xi.
    const double wm = 1.0, wp = 2.0;
    auto sp = step_scaled(wm, wp, 0.0, 0.0, -3.0);
    auto ens = simulate_scaled(sp, 1, 2e-4, 4.0, 1, {1.0, 2.5, 4.0});
    const double r = wm / wp;
    const std::complex<double> A{0.5 * (1.0 + r), 0.0}, B{0.5 * (1.0 - r), 0.0};
    for (std::size_t k = 0; k < ens.snap_times.size(); ++k) {
        const double tb = ens.snap_times[k];
        const std::complex<double> e = std::exp(1i * tb);
        const std::complex<double> xi = A * e + B / e;
        const std::complex<double> u = 1i * (A * e - B / e) / xi;
        CHECK(ens.snapshots[k][0].u1 == Catch::Approx(u.real()).margin(5e-3));
        CHECK(ens.snapshots[k][0].u2 == Catch::Approx(u.imag()).margin(5e-3));
    }
}

TEST_CASE("results do not depend on the thread count") {
    auto sp = const_scaled(0.1, 0.1);
    thread_count() = 1;
    auto a = simulate_scaled(sp, 5000, 1e-2, 3.0, 99, {1.5, 3.0});
    thread_count() = 2;
    auto b = simulate_scaled(sp, 5000, 1e-2, 3.0, 99, {1.5, 3.0});
    thread_count() = 0;
    for (std::size_t k = 0; k < a.snap_times.size(); ++k)
        for (std::size_t i = 0; i < a.n_traj; ++i) {
            CHECK(a.snapshots[k][i].u1 == b.snapshots[k][i].u1);
            CHECK(a.snapshots[k][i].u2 == b.snapshots[k][i].u2);
            CHECK(a.weight_exponent[k][i] == b.weight_exponent[k][i]);
        }
}

TEST_CASE("mean and variance at switch-on are exact; u2 stays positive") {
    auto sp = const_scaled(0.2, 0.5);
    auto ens = simulate_scaled(sp, 2000, 1e-2, 4.0, 5, {0.0, 4.0});
    double mean = 0.0, var = 0.0, min_u2 = 1e300;
    for (std::size_t i = 0; i < ens.n_traj; ++i) {
        mean += ens.snapshots[0][i].u2;
        var += (ens.snapshots[0][i].u2 - 1.0) * (ens.snapshots[0][i].u2 - 1.0);
        min_u2 = std::min(min_u2, ens.snapshots[1][i].u2);
    }
    CHECK(mean / ens.n_traj == 1.0);
    CHECK(var == 0.0);
    CHECK(min_u2 >= 0.0);
}

TEST_CASE("deterministic path error is first order in dt") {
    const double wm = 1.0, wp = 2.0;
    auto sp = step_scaled(wm, wp, 0.0, 0.0, -3.0);
    const double r = wm / wp;
    const std::complex<double> A{0.5 * (1.0 + r), 0.0}, B{0.5 * (1.0 - r), 0.0};
    auto err = [&](double dt) {
        auto ens = simulate_scaled(sp, 1, dt, 4.0, 1, {4.0});
        const std::complex<double> e = std::exp(4.0i);
        const std::complex<double> u = 1i * (A * e - B / e) / (A * e + B / e);
        return std::hypot(ens.snapshots[0][0].u1 - u.real(), ens.snapshots[0][0].u2 - u.imag());
    };
    const double e1 = err(4e-3), e2 = err(2e-3), e3 = err(1e-3);
    const double o1 = std::log2(e1 / e2), o2 = std::log2(e2 / e3);
    INFO("errors " << e1 << " " << e2 << " " << e3 << ", orders " << o1 << " " << o2);
    CHECK(o1 >= 0.8);
    CHECK(o2 >= 0.8);
}

TEST_CASE("weak convergence of the moments is at least order 0.8") {
    auto sp = const_scaled(0.3, 0.0);
    const std::size_t n = 4000000;
    auto moments = [&](double dt, std::uint64_t seed) {
        auto ens = simulate_scaled(sp, n, dt, 1.0, seed, {1.0});
        double m1 = 0.0, m2 = 0.0;
        std::size_t cnt = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!ens.alive(i, 1.0)) continue;
            m1 += ens.snapshots[0][i].u2;
            m2 += ens.snapshots[0][i].u2 * ens.snapshots[0][i].u2;
            ++cnt;
        }
        return std::pair{m1 / cnt, m2 / cnt};
    };
    auto [a1, a2] = moments(0.1, 101);
    auto [b1, b2] = moments(0.05, 202);
    auto [c1, c2] = moments(0.025, 303);
    const double o1 = std::log2(std::abs(a1 - b1) / std::abs(b1 - c1));
    const double o2 = std::log2(std::abs(a2 - b2) / std::abs(b2 - c2));
    INFO("diffs " << a1 - b1 << " " << b1 - c1 << ", orders " << o1 << " " << o2);
    CHECK(std::max(o1, o2) >= 0.8);
}

TEST_CASE("empirical density of a deterministic ensemble is a one-cell spike") {
    auto sp = const_scaled(0.0, 0.0);
    auto ens = simulate_scaled(sp, 100, 1e-3, 2.0, 3, {2.0});
    GridSpec g;
    g.u1_max = 4.0;
    g.u2_max = 4.0;
    g.n1 = 64;
    g.n2 = 64;
    auto ed = empirical_density(ens, g, 2.0);
    CHECK(ed.density.integral() == Catch::Approx(1.0).epsilon(1e-12));
    std::size_t nonzero = 0;
    for (double v : ed.density.values)
        if (v != 0.0) ++nonzero;
    CHECK(nonzero == 1);
    CHECK(ed.coverage == 1.0);
}

TEST_CASE("histogramming is linear: union of ensembles equals mixture of densities") {
    auto sp = const_scaled(0.15, 0.0);
    auto e1 = simulate_scaled(sp, 4000, 1e-2, 3.0, 10, {3.0});
    auto e2 = simulate_scaled(sp, 4000, 1e-2, 3.0, 11, {3.0});
    GridSpec g;
    g.u1_max = 6.0;
    g.u2_max = 6.0;
    g.n1 = 64;
    g.n2 = 64;
    auto d1 = empirical_density(e1, g, 3.0);
    auto d2 = empirical_density(e2, g, 3.0);

    Ensemble uni = e1;
    uni.n_traj = e1.n_traj + e2.n_traj;
    uni.snapshots[0].insert(uni.snapshots[0].end(), e2.snapshots[0].begin(),
                            e2.snapshots[0].end());
    uni.weight_exponent[0].insert(uni.weight_exponent[0].end(), e2.weight_exponent[0].begin(),
                                  e2.weight_exponent[0].end());
    uni.escape_time.insert(uni.escape_time.end(), e2.escape_time.begin(), e2.escape_time.end());
    auto du = empirical_density(uni, g, 3.0);

    // Equal-size union: densities mix with the in-grid counts as weights.
    for (std::size_t q = 0; q < du.density.values.size(); ++q) {
        const double mix = (d1.density.values[q] * d1.coverage + d2.density.values[q] * d2.coverage) /
                           (d1.coverage + d2.coverage);
        CHECK(du.density.values[q] == Catch::Approx(mix).margin(1e-12));
    }
}

TEST_CASE("coverage failure raises") {
    auto sp = const_scaled(0.3, 0.0);
    auto ens = simulate_scaled(sp, 2000, 1e-2, 6.0, 12, {6.0});
    GridSpec g;
    g.u1_max = 0.3; // far too small
    g.u2_max = 0.6;
    g.n1 = 16;
    g.n2 = 16;
    CHECK_THROWS_AS(empirical_density(ens, g, 6.0), NumericError);
}

TEST_CASE("feynman-kac with trivial sink reproduces the empirical density") {
    auto sp = const_scaled(0.12, 0.0);
    auto ens = simulate_scaled(sp, 3000, 1e-2, 4.0, 21, {4.0});
    GridSpec g;
    g.u1_max = 6.0;
    g.u2_max = 6.0;
    g.n1 = 64;
    g.n2 = 64;
    auto fk = feynman_kac(ens, -1, 4.0, &g);
    CHECK(fk.norm == 1.0);
    CHECK(fk.std_error == 0.0);
    auto ed = empirical_density(ens, g, 4.0);
    for (std::size_t q = 0; q < ed.density.values.size(); ++q)
        CHECK(fk.weighted_density.values[q] == ed.density.values[q]);
}

TEST_CASE("noiseless ground-state weight is exactly one") {
    auto sp = const_scaled(0.0, 0.0);
    auto ens = simulate_scaled(sp, 200, 1e-3, 3.0, 2, {3.0});
    auto fk = feynman_kac(ens, 0, 3.0);
    CHECK(fk.norm == 1.0); // u1 = 0 on the fixed point, weight = exp(0)
    CHECK(fk.ess == 200.0);
}

TEST_CASE("violent noise trips the divergence guard") {
    auto sp = const_scaled(30.0, 1.0);
    CHECK_THROWS_AS(simulate_scaled(sp, 500, 5e-3, 8.0, 17, {8.0}), NumericError);
}
