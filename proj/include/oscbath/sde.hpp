#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "oscbath/classical.hpp"
#include "oscbath/grid.hpp"
#include "oscbath/model.hpp"
#include "oscbath/rng.hpp"
#include "oscbath/threading.hpp"

namespace oscbath {

// Bath field pair u = Re(xi'/xi) + i Im(xi'/xi), in scaled units.
struct FieldPoint {
    double u1 = 0.0;
    double u2 = 0.0;
};

// Escape cap: the drift has an unstable direction (u1 -> -inf in finite
// time); trajectories beyond this radius are frozen, counted and excluded.
inline constexpr double kEscapeRadius = 1e3;

struct Ensemble {
    std::size_t n_traj = 0;
    double dt_bar = 0.0;
    std::uint64_t seed = 0;
    double omega_plus = 1.0;          // scale: physical u = omega_plus * u_bar
    double t0_bar = 0.0;
    std::vector<double> snap_times;   // dimensionless, ascending
    // [snapshot][trajectory]
    std::vector<std::vector<FieldPoint>> snapshots;
    // Accumulated int u1 dt' and int u2 dt' at each snapshot (Feynman-Kac
    // exponent bases; the u2 integral drives complex-sink weights).
    std::vector<std::vector<double>> weight_exponent;
    std::vector<std::vector<double>> weight_exponent_imag;
    // +inf for trajectories that never escaped.
    std::vector<double> escape_time;
    double divergence_rate = 0.0;

    std::size_t snap_index(double t_bar) const {
        for (std::size_t k = 0; k < snap_times.size(); ++k)
            if (std::abs(snap_times[k] - t_bar) <= 1e-9 * std::max(1.0, std::abs(t_bar)))
                return k;
        throw std::domain_error("Ensemble: requested time is not a snapshot");
    }

    bool alive(std::size_t traj, double t_bar) const { return escape_time[traj] > t_bar; }
};

// Euler-Maruyama ensemble of the scaled field system.  Reproducible: stream
// i is keyed by (seed, i) and chunk boundaries are fixed, so results do not
// depend on the thread count.
inline Ensemble simulate_scaled(const DimensionlessParams& sp, std::size_t n_traj, double dt_bar,
                                double t_end_bar, std::uint64_t seed,
                                std::vector<double> snap_times = {}) {
    if (n_traj < 1) throw std::domain_error("simulate: n_traj must be >= 1");
    if (!(dt_bar > 0.0)) throw std::domain_error("simulate: dt must be > 0");
    if (t_end_bar <= sp.t0_bar) throw std::domain_error("simulate: t_end must exceed t0");
    const double om_bar_max = std::max(1.0, sp.omega_bar_minus());
    if (dt_bar * om_bar_max * om_bar_max > 0.1)
        throw std::domain_error("simulate: dt too large for the drift stiffness");

    if (snap_times.empty()) snap_times = {t_end_bar};
    std::sort(snap_times.begin(), snap_times.end());
    if (snap_times.front() < sp.t0_bar || snap_times.back() > t_end_bar + 1e-12)
        throw std::domain_error("simulate: snapshot times must lie in [t0, t_end]");

    Ensemble ens;
    ens.n_traj = n_traj;
    ens.dt_bar = dt_bar;
    ens.seed = seed;
    ens.omega_plus = sp.omega_plus;
    ens.t0_bar = sp.t0_bar;
    ens.snap_times = snap_times;
    ens.snapshots.assign(snap_times.size(), std::vector<FieldPoint>(n_traj));
    ens.weight_exponent.assign(snap_times.size(), std::vector<double>(n_traj, 0.0));
    ens.weight_exponent_imag.assign(snap_times.size(), std::vector<double>(n_traj, 0.0));
    ens.escape_time.assign(n_traj, std::numeric_limits<double>::infinity());

    // Per-interval step counts, fixed up front so every trajectory walks the
    // identical time lattice.
    struct Leg {
        double t_from, t_to;
        std::size_t steps;
        std::size_t snap; // snapshot index recorded at t_to
    };
    std::vector<Leg> legs;
    double t_prev = sp.t0_bar;
    for (std::size_t k = 0; k < snap_times.size(); ++k) {
        const double span = snap_times[k] - t_prev;
        const std::size_t steps =
            span <= 0.0 ? 0 : static_cast<std::size_t>(std::llround(std::ceil(span / dt_bar)));
        legs.push_back({t_prev, snap_times[k], steps, k});
        t_prev = snap_times[k];
    }

    const double u2_init = sp.omega_bar_minus();
    const double lam = sp.lambda, mu = sp.mu;

    parallel_chunks(n_traj, 1024, [&](std::size_t, std::size_t i0, std::size_t i1) {
        for (std::size_t i = i0; i < i1; ++i) {
            RngStream rng(seed, i);
            double u1 = 0.0, u2 = u2_init, iu1 = 0.0, iu2 = 0.0;
            bool escaped = false;
            for (const Leg& leg : legs) {
                if (escaped || leg.steps == 0) {
                    ens.snapshots[leg.snap][i] = FieldPoint{u1, u2};
                    ens.weight_exponent[leg.snap][i] = iu1;
                    ens.weight_exponent_imag[leg.snap][i] = iu2;
                    continue;
                }
                const double h = (leg.t_to - leg.t_from) / leg.steps;
                double t = leg.t_from;
                for (std::size_t s = 0; s < leg.steps && !escaped; ++s) {
                    const double w0 = sp.omega_bar(t);
                    // The drift stiffens like |u|^2; subdivide the step on
                    // far-out excursions so the explicit update stays stable.
                    const double stiff = u1 * u1 + u2 * u2 + w0 * w0;
                    const std::size_t nsub =
                        std::min<std::size_t>(1 + static_cast<std::size_t>(h * stiff / 0.1),
                                              1u << 16);
                    const double hs = h / nsub;
                    const double sr = std::sqrt(2.0 * lam * hs);
                    const double si = std::sqrt(2.0 * mu * lam * hs);
                    for (std::size_t q = 0; q < nsub; ++q) {
                        const double a1 = u2 * u2 - u1 * u1 - w0 * w0;
                        const double a2 = -2.0 * u1 * u2;
                        iu1 += u1 * hs;
                        iu2 += u2 * hs;
                        u1 += a1 * hs - (lam > 0.0 ? sr * rng.next_gaussian() : 0.0);
                        u2 += a2 * hs - (si > 0.0 ? si * rng.next_gaussian() : 0.0);
                        if (u2 < 0.0) u2 = -u2; // reflecting edge, mirrors the PDE boundary
                        if (u1 * u1 + u2 * u2 > kEscapeRadius * kEscapeRadius) {
                            escaped = true;
                            ens.escape_time[i] = t;
                            break;
                        }
                    }
                    t = leg.t_from + (s + 1) * h;
                }
                ens.snapshots[leg.snap][i] = FieldPoint{u1, u2};
                ens.weight_exponent[leg.snap][i] = iu1;
                ens.weight_exponent_imag[leg.snap][i] = iu2;
            }
        }
    });

    std::size_t esc = 0;
    for (double e : ens.escape_time)
        if (std::isfinite(e)) ++esc;
    ens.divergence_rate = static_cast<double>(esc) / static_cast<double>(n_traj);
    if (ens.divergence_rate > 0.01)
        throw NumericError("simulate: divergence rate " + std::to_string(ens.divergence_rate) +
                           " exceeds 1%");
    return ens;
}

// Physical-units entry point; times are converted with omega_plus.
inline Ensemble simulate(const ModelParams& params, std::size_t n_traj, double dt, double t_end,
                         std::uint64_t seed, std::vector<double> snap_times = {}) {
    const DimensionlessParams sp = scale(params);
    for (double& s : snap_times) s *= params.omega_plus;
    return simulate_scaled(sp, n_traj, dt * params.omega_plus, t_end * params.omega_plus, seed,
                           std::move(snap_times));
}

// Histogram density of the snapshot at t_bar, unit mass on the grid.
// Escaped trajectories are excluded; more than 5% of the living mass outside
// the grid is a coverage error.
struct EmpiricalDensity {
    DensityGrid density;
    double coverage = 1.0;        // in-grid fraction of living trajectories
    double excluded_escaped = 0.0;
};

inline EmpiricalDensity empirical_density(const Ensemble& ens, const GridSpec& grid,
                                          double t_bar) {
    grid.validate();
    const std::size_t k = ens.snap_index(t_bar);
    DensityGrid f(grid, t_bar);
    std::size_t alive = 0, inside = 0;
    for (std::size_t i = 0; i < ens.n_traj; ++i) {
        if (!ens.alive(i, t_bar)) continue;
        ++alive;
        const FieldPoint p = ens.snapshots[k][i];
        const int ci = static_cast<int>(std::floor((p.u1 + grid.u1_max) / grid.h1()));
        const int cj = static_cast<int>(std::floor(p.u2 / grid.h2()));
        if (ci < 0 || ci >= grid.n1 || cj < 0 || cj >= grid.n2) continue;
        ++inside;
        f.at(ci, cj) += 1.0;
    }
    if (alive == 0) throw NumericError("empirical_density: no living trajectories");
    EmpiricalDensity out;
    out.coverage = static_cast<double>(inside) / static_cast<double>(alive);
    out.excluded_escaped = 1.0 - static_cast<double>(alive) / static_cast<double>(ens.n_traj);
    if (out.coverage < 0.95)
        throw NumericError("empirical_density: only " + std::to_string(out.coverage * 100.0) +
                           "% of the mass is on the grid");
    f.scale(1.0 / (static_cast<double>(inside) * grid.cell_area()));
    f.time = t_bar;
    out.density = std::move(f);
    return out;
}

// Monte-Carlo Feynman-Kac estimate for sink index m: norm c = E[exp(-(m+1)
// int u1 dt')] and the weighted density estimating Q^(m)/c.
struct FeynmanKacEstimate {
    double norm = 0.0;
    double std_error = 0.0;
    double ess = 0.0;             // effective sample size
    DensityGrid weighted_density;
    double coverage = 1.0;
    double excluded_escaped = 0.0;
};

inline FeynmanKacEstimate feynman_kac(const Ensemble& ens, int m, double t_bar,
                                      const GridSpec* grid = nullptr) {
    const std::size_t k = ens.snap_index(t_bar);
    const double c_exp = static_cast<double>(m + 1);
    double sum_w = 0.0, sum_w2 = 0.0;
    std::size_t alive = 0;
    for (std::size_t i = 0; i < ens.n_traj; ++i) {
        if (!ens.alive(i, t_bar)) continue;
        ++alive;
        const double w = std::exp(-c_exp * ens.weight_exponent[k][i]);
        sum_w += w;
        sum_w2 += w * w;
    }
    if (alive == 0) throw NumericError("feynman_kac: no living trajectories");

    FeynmanKacEstimate out;
    const double n = static_cast<double>(alive);
    out.norm = sum_w / n;
    const double var = std::max(0.0, sum_w2 / n - out.norm * out.norm);
    out.std_error = std::sqrt(var / n);
    out.ess = sum_w > 0.0 ? sum_w * sum_w / sum_w2 : 0.0;
    out.excluded_escaped = 1.0 - n / static_cast<double>(ens.n_traj);
    if (out.ess < 100.0)
        throw NumericError("feynman_kac: effective sample size " + std::to_string(out.ess) +
                           " below 100");

    if (grid) {
        grid->validate();
        DensityGrid f(*grid, t_bar);
        double w_inside = 0.0;
        for (std::size_t i = 0; i < ens.n_traj; ++i) {
            if (!ens.alive(i, t_bar)) continue;
            const FieldPoint p = ens.snapshots[k][i];
            const int ci = static_cast<int>(std::floor((p.u1 + grid->u1_max) / grid->h1()));
            const int cj = static_cast<int>(std::floor(p.u2 / grid->h2()));
            if (ci < 0 || ci >= grid->n1 || cj < 0 || cj >= grid->n2) continue;
            const double w = std::exp(-c_exp * ens.weight_exponent[k][i]);
            f.at(ci, cj) += w;
            w_inside += w;
        }
        out.coverage = sum_w > 0.0 ? w_inside / sum_w : 0.0;
        if (out.coverage < 0.95)
            throw NumericError("feynman_kac: weighted coverage below 95%");
        f.scale(1.0 / (w_inside * grid->cell_area()));
        out.weighted_density = std::move(f);
    }
    return out;
}

// Complex-weight Feynman-Kac estimate E[exp(-p int u1 - i k int u2)],
// the trajectory-side counterpart of the complex sink fields.
struct ComplexFkEstimate {
    std::complex<double> mean;
    double se_re = 0.0, se_im = 0.0;
};

inline ComplexFkEstimate feynman_kac_complex(const Ensemble& ens, double p, double k,
                                             double t_bar) {
    const std::size_t sk = ens.snap_index(t_bar);
    double sr = 0.0, si = 0.0, sr2 = 0.0, si2 = 0.0;
    std::size_t alive = 0;
    for (std::size_t i = 0; i < ens.n_traj; ++i) {
        if (!ens.alive(i, t_bar)) continue;
        ++alive;
        const double a = std::exp(-p * ens.weight_exponent[sk][i]);
        const double ph = -k * ens.weight_exponent_imag[sk][i];
        const double re = a * std::cos(ph), im = a * std::sin(ph);
        sr += re;
        si += im;
        sr2 += re * re;
        si2 += im * im;
    }
    if (alive == 0) throw NumericError("feynman_kac_complex: no living trajectories");
    const double n = static_cast<double>(alive);
    ComplexFkEstimate out;
    out.mean = {sr / n, si / n};
    out.se_re = std::sqrt(std::max(0.0, sr2 / n - (sr / n) * (sr / n)) / n);
    out.se_im = std::sqrt(std::max(0.0, si2 / n - (si / n) * (si / n)) / n);
    return out;
}

} // namespace oscbath
