#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "oscbath/model.hpp"

namespace oscbath {

using complexd = std::complex<double>;

// Numerical failure (tolerance not met, no convergence).  Distinct from
// std::domain_error so the CLI can map it to its own exit code.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Trajectory of the classical oscillator equation xi'' + W0^2(t) xi = 0
// started on the in-plateau as xi = exp(i W- t).  gamma is the accumulated
// phase W- Int dt/sigma^2 referenced to zero at t_grid.front().
struct ClassicalSolution {
    std::vector<double> t_grid;
    std::vector<complexd> xi;
    std::vector<double> sigma;   // |xi|
    std::vector<double> gamma;
    complexd c1{1.0, 0.0}, c2{0.0, 0.0};
    double rho = 0.0;            // |c2/c1|^2
    double wronskian_drift = 0.0;

    void write_csv(std::FILE* f) const {
        std::fprintf(f, "t,re_xi,im_xi,sigma,gamma\n");
        for (std::size_t i = 0; i < t_grid.size(); ++i)
            std::fprintf(f, "%.17g,%.17g,%.17g,%.17g,%.17g\n", t_grid[i], xi[i].real(),
                         xi[i].imag(), sigma[i], gamma[i]);
    }
};

namespace detail {

// State: (Re xi, Im xi, Re xi', Im xi', gamma).
using OscState = std::array<double, 5>;

inline OscState osc_rhs(const FrequencyProfile& prof, double omega_minus, double t,
                        const OscState& y) {
    const double w0 = prof(t);
    const double w2 = w0 * w0;
    const double s2 = y[0] * y[0] + y[1] * y[1];
    return {y[2], y[3], -w2 * y[0], -w2 * y[1], omega_minus / s2};
}

// Dormand-Prince 5(4) embedded step.  Returns the error estimate scaled by
// the tolerance (<= 1 means accepted).
inline double dp45_step(const FrequencyProfile& prof, double omega_minus, double t, double h,
                        const OscState& y, OscState& out, double atol, double rtol) {
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                            b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                            e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

    OscState k1 = osc_rhs(prof, omega_minus, t, y), tmp;
    auto axpy = [&](const std::initializer_list<std::pair<double, const OscState*>>& terms) {
        for (int i = 0; i < 5; ++i) {
            double v = y[i];
            for (auto& [c, k] : terms) v += h * c * (*k)[i];
            tmp[i] = v;
        }
    };
    axpy({{a21, &k1}});
    OscState k2 = osc_rhs(prof, omega_minus, t + h / 5, tmp);
    axpy({{a31, &k1}, {a32, &k2}});
    OscState k3 = osc_rhs(prof, omega_minus, t + 3 * h / 10, tmp);
    axpy({{a41, &k1}, {a42, &k2}, {a43, &k3}});
    OscState k4 = osc_rhs(prof, omega_minus, t + 4 * h / 5, tmp);
    axpy({{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}});
    OscState k5 = osc_rhs(prof, omega_minus, t + 8 * h / 9, tmp);
    axpy({{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}});
    OscState k6 = osc_rhs(prof, omega_minus, t + h, tmp);
    for (int i = 0; i < 5; ++i)
        out[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
    OscState k7 = osc_rhs(prof, omega_minus, t + h, out);

    double err = 0.0;
    for (int i = 0; i < 5; ++i) {
        const double e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] +
                              e7 * k7[i]);
        const double sc = atol + rtol * std::max(std::abs(y[i]), std::abs(out[i]));
        err += (e / sc) * (e / sc);
    }
    return std::sqrt(err / 5.0);
}

// Integrates from t to t_end, landing exactly on t_end.
inline void dp45_advance(const FrequencyProfile& prof, double omega_minus, double& t,
                         OscState& y, double t_end, double hmax, double atol, double rtol) {
    double h = std::min(hmax, t_end - t);
    while (t < t_end - 1e-14 * std::max(1.0, std::abs(t_end))) {
        h = std::min(h, t_end - t);
        OscState out;
        const double err = dp45_step(prof, omega_minus, t, h, y, out, atol, rtol);
        if (err <= 1.0) {
            t += h;
            y = out;
            h = std::min(hmax, h * std::min(5.0, 0.9 * std::pow(err > 1e-12 ? err : 1e-12, -0.2)));
        } else {
            h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
            if (h < 1e-13 * std::max(1.0, std::abs(t)))
                throw NumericError("classical solver: step size underflow at t = " +
                                   std::to_string(t));
        }
    }
    t = t_end;
}

} // namespace detail

// Solves the classical equation over [t_span.first, t_span.second] for the
// regular frequency, sampling every `step`.  The Wronskian Im(xi' xi*) must
// stay within 1e-8 relative drift or a NumericError is raised.
inline ClassicalSolution solve_classical(const ModelParams& params,
                                         std::pair<double, double> t_span, double step,
                                         double atol = 1e-10, double rtol = 1e-8) {
    params.validate();
    if (!(step > 0.0) || t_span.second <= t_span.first)
        throw std::domain_error("solve_classical: need step > 0 and a forward span");
    const auto& prof = params.profile;
    prof.check_asymptotics(t_span.first, t_span.second);

    const double om = params.omega_minus;
    const double t0 = t_span.first;
    detail::OscState y{std::cos(om * t0), std::sin(om * t0), -om * std::sin(om * t0),
                       om * std::cos(om * t0), 0.0};

    // Local step errors accumulate over the span; run the controller four
    // orders below the requested tolerances so the conserved Wronskian stays
    // within them globally.
    const double atol_i = std::max(1e-15, atol * 1e-4);
    const double rtol_i = std::max(1e-14, rtol * 1e-4);

    // Sample times plus profile breakpoints, so discontinuities are never
    // stepped across.
    std::vector<double> stops;
    const std::size_t n = static_cast<std::size_t>(std::ceil((t_span.second - t0) / step));
    for (std::size_t i = 1; i <= n; ++i) stops.push_back(std::min(t0 + i * step, t_span.second));
    for (double b : prof.breakpoints())
        if (b > t0 && b < t_span.second) stops.push_back(b);
    std::sort(stops.begin(), stops.end());
    stops.erase(std::unique(stops.begin(), stops.end(),
                            [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                stops.end());

    ClassicalSolution sol;
    const double w0 = om; // Wronskian of the in-state initial data
    auto record = [&](double t) {
        sol.t_grid.push_back(t);
        sol.xi.emplace_back(y[0], y[1]);
        sol.sigma.push_back(std::hypot(y[0], y[1]));
        sol.gamma.push_back(y[4]);
        const double w = y[3] * y[0] - y[2] * y[1]; // Im(xi' xi*)
        sol.wronskian_drift = std::max(sol.wronskian_drift, std::abs(w - w0) / w0);
    };
    record(t0);

    double t = t0;
    for (double ts : stops) {
        detail::dp45_advance(prof, om, t, y, ts, step, atol_i, rtol_i);
        record(ts);
    }

    if (sol.wronskian_drift > 1e-8)
        throw NumericError("solve_classical: Wronskian drift " +
                           std::to_string(sol.wronskian_drift) +
                           " exceeds 1e-8; reduce step or tolerances");
    return sol;
}

// Least-squares fit of the tail of `sol` to C1 exp(i W+ t) - C2 exp(-i W+ t)
// over the final quarter of the span.  The profile must already sit on the
// out-plateau there.
struct AsymptoticCoeffs {
    complexd c1, c2;
    double rho;
    double residual;
};

inline AsymptoticCoeffs asymptotic_coeffs(const ClassicalSolution& sol, double omega_plus,
                                          const FrequencyProfile* profile = nullptr) {
    if (sol.t_grid.size() < 8)
        throw std::domain_error("asymptotic_coeffs: too few samples");
    const double t_lo = sol.t_grid.front(), t_hi = sol.t_grid.back();
    const double w_start = t_hi - 0.25 * (t_hi - t_lo);
    std::size_t i0 = 0;
    while (i0 < sol.t_grid.size() && sol.t_grid[i0] < w_start) ++i0;
    if (sol.t_grid.size() - i0 < 4)
        throw std::domain_error("asymptotic_coeffs: fit window too small");
    if (profile) {
        for (std::size_t i = i0; i < sol.t_grid.size(); ++i)
            if (std::abs((*profile)(sol.t_grid[i]) - omega_plus) > 1e-8 * omega_plus)
                throw NumericError("asymptotic_coeffs: fit window leaves the out-plateau");
    }

    // Normal equations for the basis (e^{iwt}, -e^{-iwt}).
    complexd g11 = 0, g12 = 0, g22 = 0, r1 = 0, r2 = 0;
    for (std::size_t i = i0; i < sol.t_grid.size(); ++i) {
        const double t = sol.t_grid[i];
        const complexd e{std::cos(omega_plus * t), std::sin(omega_plus * t)};
        const complexd f1 = e, f2 = -std::conj(e);
        g11 += std::conj(f1) * f1;
        g12 += std::conj(f1) * f2;
        g22 += std::conj(f2) * f2;
        r1 += std::conj(f1) * sol.xi[i];
        r2 += std::conj(f2) * sol.xi[i];
    }
    const complexd g21 = std::conj(g12);
    const complexd det = g11 * g22 - g12 * g21;
    if (std::abs(det) < 1e-12 * std::abs(g11 * g22))
        throw NumericError("asymptotic_coeffs: degenerate fit window");
    AsymptoticCoeffs out;
    out.c1 = (g22 * r1 - g12 * r2) / det;
    out.c2 = (g11 * r2 - g21 * r1) / det;

    double res = 0.0, norm = 0.0;
    for (std::size_t i = i0; i < sol.t_grid.size(); ++i) {
        const double t = sol.t_grid[i];
        const complexd e{std::cos(omega_plus * t), std::sin(omega_plus * t)};
        const complexd fit = out.c1 * e - out.c2 * std::conj(e);
        res += std::norm(sol.xi[i] - fit);
        norm += std::norm(sol.xi[i]);
    }
    out.residual = std::sqrt(res / std::max(1e-300, norm));
    if (out.residual > 1e-6)
        throw NumericError("asymptotic_coeffs: fit residual " + std::to_string(out.residual) +
                           " exceeds 1e-6; tail is not an out-plateau solution");
    const double a1 = std::norm(out.c1);
    out.rho = a1 > 0.0 ? std::norm(out.c2) / a1 : 0.0;
    return out;
}

// Convenience: solve and fit in one call, storing the coefficients in the
// returned solution.
inline ClassicalSolution solve_with_asymptotics(const ModelParams& params,
                                                std::pair<double, double> t_span, double step) {
    ClassicalSolution sol = solve_classical(params, t_span, step);
    const AsymptoticCoeffs ac = asymptotic_coeffs(sol, params.omega_plus, &params.profile);
    sol.c1 = ac.c1;
    sol.c2 = ac.c2;
    sol.rho = ac.rho;
    return sol;
}

} // namespace oscbath
