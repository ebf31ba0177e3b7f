#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "oscbath/classical.hpp"
#include "oscbath/grid.hpp"
#include "oscbath/model.hpp"

namespace oscbath {

// Scalar observable time series with a parameter snapshot.
struct ObservableTrace {
    std::string name;
    std::vector<double> times;
    std::vector<double> values;
    std::map<std::string, double> meta;

    void push(double t, double v) {
        if (!times.empty() && t <= times.back())
            throw std::domain_error("ObservableTrace: times must increase strictly");
        if (!std::isfinite(v))
            throw NumericError("ObservableTrace: non-finite value for " + name);
        times.push_back(t);
        values.push_back(v);
    }

    void write_csv(std::FILE* f) const {
        std::fprintf(f, "t,%s\n", name.c_str());
        for (std::size_t i = 0; i < times.size(); ++i)
            std::fprintf(f, "%.17g,%.17g\n", times[i], values[i]);
    }
};

// Cell-midpoint quadrature of kernel(u1, u2) * F.  Kernels singular at
// u2 -> 0 skip the first cell row; the skipped band is reported and must
// stay below 1% of the total.
struct WeightedIntegral {
    double value = 0.0;
    double cutoff_band = 0.0;   // contribution of the excluded row
    double band_fraction = 0.0;
};

inline WeightedIntegral weighted_integral(const DensityGrid& f,
                                          const std::function<double(double, double)>& kernel,
                                          bool singular_at_zero) {
    const GridSpec& g = f.grid;
    WeightedIntegral out;
    const int j_start = singular_at_zero ? 1 : 0;
    for (int j = j_start; j < g.n2; ++j) {
        const double u2 = g.u2(j);
        double s = 0.0;
        for (int i = 0; i < g.n1; ++i) s += kernel(g.u1(i), u2) * f.at(i, j);
        out.value += s;
    }
    out.value *= g.cell_area();
    if (singular_at_zero) {
        double s = 0.0;
        for (int i = 0; i < g.n1; ++i) s += kernel(g.u1(i), g.u2(0)) * f.at(i, 0);
        out.cutoff_band = s * g.cell_area();
        const double tot = std::abs(out.value) + std::abs(out.cutoff_band);
        out.band_fraction = tot > 0.0 ? std::abs(out.cutoff_band) / tot : 0.0;
        if (out.band_fraction > 0.01)
            throw NumericError("weighted_integral: " +
                               std::to_string(out.band_fraction * 100.0) +
                               "% of the integral sits in the u2 cutoff band; refine the grid");
    }
    return out;
}

// N-factor sqrt(W-) Int du/sqrt(u2) Q^(0); on scaled grids the prefactor
// becomes 1/d.
inline WeightedIntegral n_factor(const DensityGrid& q0, const DimensionlessParams& sp) {
    auto w = weighted_integral(
        q0, [](double, double u2) { return 1.0 / std::sqrt(u2); }, true);
    w.value /= sp.d;
    w.cutoff_band /= sp.d;
    return w;
}

// Level populations: kernel u2^{-1/2} for the ground family (m = 0) and
// u2^{-3/2} for the first excited one (m = 2).
inline WeightedIntegral population(int m, const DensityGrid& q) {
    if (m == 0)
        return weighted_integral(
            q, [](double, double u2) { return 1.0 / std::sqrt(u2); }, true);
    if (m == 2)
        return weighted_integral(
            q, [](double, double u2) { return 1.0 / (u2 * std::sqrt(u2)); }, true);
    throw std::domain_error("population: only sink indices 0 and 2 are defined");
}

// Symmetric coordinate grid for reduced-density profiles, in the scaled
// coordinate sqrt(omega_plus) q.
struct QGrid {
    double q_max = 6.0;
    int n = 2048;

    double point(int i) const { return -q_max + (2.0 * q_max * i) / (n - 1); }
    double dq() const { return 2.0 * q_max / (n - 1); }

    // Trapezoid weights.
    double weight(int i) const { return (i == 0 || i == n - 1) ? 0.5 * dq() : dq(); }
};

// Extent from the lowest populated u2 row: the diagonal profile decays no
// slower than exp(-u2_min q^2).
inline QGrid auto_q_grid(const DensityGrid& q0, int n = 2048) {
    const auto marg = q0.u2_marginal();
    double total = 0.0;
    for (double m : marg) total += m;
    double u2_min = q0.grid.u2(q0.grid.n2 - 1);
    double acc = 0.0;
    for (int j = 0; j < q0.grid.n2; ++j) {
        acc += marg[j];
        if (acc > 1e-6 * total) {
            u2_min = q0.grid.u2(j);
            break;
        }
    }
    QGrid qg;
    qg.q_max = 6.0 / std::sqrt(std::max(u2_min, 0.5 * q0.grid.h2()));
    qg.n = n;
    return qg;
}

// Diagonal of the reduced density matrix: rho(q) = Int du Q^(0) exp(-u2 q^2),
// sampled on qg.  All values are strictly positive for a nonzero Q.
inline std::vector<double> rdm_diagonal(const DensityGrid& q0, const QGrid& qg) {
    const GridSpec& g = q0.grid;
    std::vector<double> rho(qg.n, 0.0);
    // Accumulate over the u2 marginal: the kernel has no u1 dependence.
    const auto marg = q0.u2_marginal();
    for (int i = 0; i < qg.n; ++i) {
        const double q2 = qg.point(i) * qg.point(i);
        double s = 0.0;
        for (int j = 0; j < g.n2; ++j) s += marg[j] * std::exp(-g.u2(j) * q2);
        rho[i] = s * g.h2();
    }
    // Truncation guard: Gaussian tail bound relative to the grid integral.
    double integral = 0.0;
    for (int i = 0; i < qg.n; ++i) integral += rho[i] * qg.weight(i);
    const auto marg2 = marg;
    double u2_min = g.u2(g.n2 - 1);
    double total = 0.0;
    for (double m : marg2) total += m;
    double acc = 0.0;
    for (int j = 0; j < g.n2; ++j) {
        acc += marg2[j];
        if (acc > 1e-6 * total) {
            u2_min = g.u2(j);
            break;
        }
    }
    const double tail = rho.back() / std::max(2.0 * u2_min * qg.q_max, 1e-30);
    if (tail > 1e-4 * std::max(integral, 1e-300))
        throw NumericError("rdm_diagonal: q-grid truncation loses more than 1e-4 of the mass");
    return rho;
}

// Int rho ln(rho) dq in physical units (the scaled-coordinate integral picks
// up 1/sqrt(omega_plus)).  With `normalized`, rho is scaled to unit integral
// first; the raw variant follows the printed entropy combination.
inline double entropy_integral(const std::vector<double>& rho, const QGrid& qg,
                               double omega_plus, bool normalized) {
    double norm = 1.0;
    if (normalized) {
        norm = 0.0;
        for (int i = 0; i < qg.n; ++i) norm += rho[i] * qg.weight(i);
        if (!(norm > 0.0)) throw NumericError("entropy_integral: zero profile");
    }
    double s = 0.0;
    for (int i = 0; i < qg.n; ++i) {
        const double r = rho[i] / norm;
        if (r > 0.0) s += r * std::log(r) * qg.weight(i);
        else if (r < 0.0)
            throw NumericError("entropy_integral: negative diagonal density");
    }
    return s / std::sqrt(omega_plus);
}

struct EntropyBreakdown {
    double value = 0.0;        // combined two-oscillator entropy
    double n1 = 0.0, n2 = 0.0; // N-factors
    double piece1 = 0.0, piece2 = 0.0;
};

// Von Neumann entropy of the pair: -N1 L2 - N2 L1 with L_l the diagonal
// rho ln rho integral of oscillator l.
inline EntropyBreakdown von_neumann_entropy(const DensityGrid& q0_1,
                                            const DimensionlessParams& sp1,
                                            const DensityGrid& q0_2,
                                            const DimensionlessParams& sp2,
                                            bool normalized_rho = false) {
    EntropyBreakdown out;
    out.n1 = n_factor(q0_1, sp1).value;
    out.n2 = n_factor(q0_2, sp2).value;
    const QGrid g1 = auto_q_grid(q0_1), g2 = auto_q_grid(q0_2);
    out.piece1 = entropy_integral(rdm_diagonal(q0_1, g1), g1, sp1.omega_plus, normalized_rho);
    out.piece2 = entropy_integral(rdm_diagonal(q0_2, g2), g2, sp2.omega_plus, normalized_rho);
    out.value = -out.n1 * out.piece2 - out.n2 * out.piece1;
    return out;
}

// Entropy of the bath-coupled pair from the sourced fields D_l:
// -N1 L2 - N2 L1 with L_l = (1/d) Int du/sqrt(u2) D_l.
inline EntropyBreakdown generalized_entropy(const DensityGrid& q0_1, const DensityGrid& d_1,
                                            const DimensionlessParams& sp1,
                                            const DensityGrid& q0_2, const DensityGrid& d_2,
                                            const DimensionlessParams& sp2) {
    EntropyBreakdown out;
    out.n1 = n_factor(q0_1, sp1).value;
    out.n2 = n_factor(q0_2, sp2).value;
    auto piece = [](const DensityGrid& d, const DimensionlessParams& sp) {
        auto w = weighted_integral(
            d, [](double, double u2) { return 1.0 / std::sqrt(u2); }, true);
        return w.value / sp.d;
    };
    out.piece1 = piece(d_1, sp1);
    out.piece2 = piece(d_2, sp2);
    out.value = -out.n1 * out.piece2 - out.n2 * out.piece1;
    return out;
}

// Energy expectation of the relaxed oscillator: E_0 = (1+K_0) W+/2 from the
// normalized stationary ground field (m = 0), E_1 = 3(1+K_1) W+/2 from the
// m = 2 field.
inline double energy_level(int m, const DensityGrid& q_stationary,
                           const DimensionlessParams& sp) {
    const double d = sp.d;
    auto kern = [d](double u1, double u2) {
        return (-1.0 + (1.0 + u1 * u1 + u2 * u2) / (2.0 * u2 * d)) / std::sqrt(u2);
    };
    if (m == 0) {
        const double k0 = weighted_integral(q_stationary, kern, true).value;
        return 0.5 * (1.0 + k0) * sp.omega_plus;
    }
    if (m == 2) {
        auto kern1 = [&](double u1, double u2) { return kern(u1, u2) / u2; };
        const double k1 = weighted_integral(q_stationary, kern1, true).value;
        return 1.5 * (1.0 + k1) * sp.omega_plus;
    }
    throw std::domain_error("energy_level: only sink indices 0 and 2 are defined");
}

} // namespace oscbath
