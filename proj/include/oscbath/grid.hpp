#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace oscbath {

// Cell-centered rectangular grid on the half-plane u2 > 0.  u2 = 0 is the
// bottom cell face, so the reflecting boundary sits exactly on a face.
// The u1 extent is symmetric, which makes the reflection u1 -> -u1 an exact
// cell permutation (i <-> n1-1-i).
struct GridSpec {
    double u1_max = 8.0;   // u1 in [-u1_max, u1_max]
    double u2_max = 8.0;   // u2 in (0, u2_max]
    int n1 = 256;
    int n2 = 256;
    double dt = 0.0;       // suggested time step; 0 = derive from CFL

    void validate() const {
        if (!(u1_max > 0.0) || !(u2_max > 0.0))
            throw std::domain_error("grid: extents must be positive");
        if (n1 < 16 || n2 < 16)
            throw std::domain_error("grid: need at least 16 cells per direction");
    }

    double u1_min() const { return -u1_max; }
    double h1() const { return 2.0 * u1_max / n1; }
    double h2() const { return u2_max / n2; }
    double cell_area() const { return h1() * h2(); }
    double u1(int i) const { return -u1_max + (i + 0.5) * h1(); }
    double u2(int j) const { return (j + 0.5) * h2(); }
    std::size_t cells() const { return static_cast<std::size_t>(n1) * n2; }
    std::size_t idx(int i, int j) const { return static_cast<std::size_t>(j) * n1 + i; }

    bool same_layout(const GridSpec& o) const {
        return u1_max == o.u1_max && u2_max == o.u2_max && n1 == o.n1 && n2 == o.n2;
    }
};

// Real scalar field on a GridSpec (probability densities, sink-weighted
// densities, entropy sources, real/imaginary components).
struct DensityGrid {
    GridSpec grid;
    std::vector<double> values;
    double time = 0.0;

    DensityGrid() = default;
    explicit DensityGrid(const GridSpec& g, double t = 0.0)
        : grid(g), values(g.cells(), 0.0), time(t) {
        grid.validate();
    }

    double& at(int i, int j) { return values[grid.idx(i, j)]; }
    double at(int i, int j) const { return values[grid.idx(i, j)]; }

    double integral() const {
        double s = 0.0;
        for (double v : values) s += v;
        return s * grid.cell_area();
    }

    void scale(double a) {
        for (double& v : values) v *= a;
    }

    // Rescales to unit mass; returns the mass before normalization.
    double normalize() {
        const double m = integral();
        if (m == 0.0) throw std::domain_error("DensityGrid::normalize: zero mass");
        scale(1.0 / m);
        return m;
    }

    double min_value() const {
        double m = values.empty() ? 0.0 : values[0];
        for (double v : values) m = std::min(m, v);
        return m;
    }

    bool all_finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }

    // Mass in the cells adjacent to the Dirichlet boundaries (left, right,
    // top); the bottom is reflecting and not counted.
    double boundary_mass() const {
        double s = 0.0;
        for (int j = 0; j < grid.n2; ++j) s += at(0, j) + at(grid.n1 - 1, j);
        for (int i = 1; i + 1 < grid.n1; ++i) s += at(i, grid.n2 - 1);
        return s * grid.cell_area();
    }

    std::vector<double> u2_marginal() const {
        std::vector<double> m(grid.n2, 0.0);
        for (int j = 0; j < grid.n2; ++j) {
            double s = 0.0;
            for (int i = 0; i < grid.n1; ++i) s += at(i, j);
            m[j] = s * grid.h1();
        }
        return m;
    }

    std::vector<double> u1_marginal() const {
        std::vector<double> m(grid.n1, 0.0);
        for (int i = 0; i < grid.n1; ++i) {
            double s = 0.0;
            for (int j = 0; j < grid.n2; ++j) s += at(i, j);
            m[i] = s * grid.h2();
        }
        return m;
    }

    // Mass-weighted mean position.
    std::pair<double, double> centroid() const {
        double w = 0.0, s1 = 0.0, s2 = 0.0;
        for (int j = 0; j < grid.n2; ++j)
            for (int i = 0; i < grid.n1; ++i) {
                const double v = at(i, j);
                w += v;
                s1 += v * grid.u1(i);
                s2 += v * grid.u2(j);
            }
        if (w == 0.0) return {0.0, 0.0};
        return {s1 / w, s2 / w};
    }

    // Mean of |u1| and mean of u2 under |values| (for concentration reports).
    std::pair<double, double> abs_centroid() const {
        double w = 0.0, s1 = 0.0, s2 = 0.0;
        for (int j = 0; j < grid.n2; ++j)
            for (int i = 0; i < grid.n1; ++i) {
                const double a = std::abs(at(i, j));
                w += a;
                s1 += a * std::abs(grid.u1(i));
                s2 += a * grid.u2(j);
            }
        if (w == 0.0) return {0.0, 0.0};
        return {s1 / w, s2 / w};
    }

    DensityGrid reflected_u1() const {
        DensityGrid out(grid, time);
        for (int j = 0; j < grid.n2; ++j)
            for (int i = 0; i < grid.n1; ++i) out.at(i, j) = at(grid.n1 - 1 - i, j);
        return out;
    }
};

// Complex field stored as two real grids with shared layout and time.
struct ComplexGrid {
    DensityGrid re, im;

    ComplexGrid() = default;
    explicit ComplexGrid(const GridSpec& g, double t = 0.0) : re(g, t), im(g, t) {}

    const GridSpec& grid() const { return re.grid; }
    double time() const { return re.time; }
    void set_time(double t) { re.time = t; im.time = t; }

    double norm_l1() const {
        double s = 0.0;
        for (std::size_t k = 0; k < re.values.size(); ++k)
            s += std::hypot(re.values[k], im.values[k]);
        return s * re.grid.cell_area();
    }

    double norm_l2_sq() const {
        double s = 0.0;
        for (std::size_t k = 0; k < re.values.size(); ++k)
            s += re.values[k] * re.values[k] + im.values[k] * im.values[k];
        return s * re.grid.cell_area();
    }

    void scale(double a) {
        re.scale(a);
        im.scale(a);
    }
};

inline double l1_distance(const DensityGrid& a, const DensityGrid& b) {
    if (!a.grid.same_layout(b.grid))
        throw std::domain_error("l1_distance: grid layouts differ");
    double s = 0.0;
    for (std::size_t k = 0; k < a.values.size(); ++k) s += std::abs(a.values[k] - b.values[k]);
    return s * a.grid.cell_area();
}

// Block-sums by an integer factor (mass preserving, density rescaled).
inline DensityGrid coarsen(const DensityGrid& f, int factor) {
    if (factor < 1 || f.grid.n1 % factor || f.grid.n2 % factor)
        throw std::domain_error("coarsen: factor must divide both cell counts");
    GridSpec g = f.grid;
    g.n1 /= factor;
    g.n2 /= factor;
    DensityGrid out(g, f.time);
    for (int j = 0; j < f.grid.n2; ++j)
        for (int i = 0; i < f.grid.n1; ++i)
            out.at(i / factor, j / factor) += f.at(i, j) / (factor * factor);
    return out;
}

// Normalized Gaussian bump of the given cell-width, the standard mollified
// point initial condition.
inline DensityGrid delta_grid(const GridSpec& g, double u1c, double u2c,
                              double width_cells = 2.0) {
    g.validate();
    DensityGrid f(g);
    const double s1 = width_cells * g.h1(), s2 = width_cells * g.h2();
    for (int j = 0; j < g.n2; ++j)
        for (int i = 0; i < g.n1; ++i) {
            const double x = (g.u1(i) - u1c) / s1, y = (g.u2(j) - u2c) / s2;
            f.at(i, j) = std::exp(-0.5 * (x * x + y * y));
        }
    f.normalize();
    return f;
}

} // namespace oscbath
