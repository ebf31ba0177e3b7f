#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace oscbath {

// Regular part of the oscillator frequency, switching between the two
// asymptotic plateaus.  Three families cover all runs: constant frequency,
// sudden step at t = 0, and a smooth tanh ramp with time scale tau.
class FrequencyProfile {
public:
    enum class Kind { Constant, Step, TanhRamp };

    static FrequencyProfile constant(double omega) {
        return FrequencyProfile{Kind::Constant, omega, omega, 0.0};
    }
    static FrequencyProfile step(double omega_minus, double omega_plus) {
        return FrequencyProfile{Kind::Step, omega_minus, omega_plus, 0.0};
    }
    static FrequencyProfile tanh_ramp(double omega_minus, double omega_plus, double tau) {
        if (tau <= 0.0)
            throw std::domain_error("FrequencyProfile: tanh ramp needs tau > 0");
        return FrequencyProfile{Kind::TanhRamp, omega_minus, omega_plus, tau};
    }

    double operator()(double t) const {
        switch (kind_) {
        case Kind::Constant: return om_;
        case Kind::Step:     return t < 0.0 ? om_ : op_;
        case Kind::TanhRamp: return om_ + (op_ - om_) * 0.5 * (1.0 + std::tanh(t / tau_));
        }
        return op_;
    }

    Kind kind() const { return kind_; }
    double omega_minus() const { return om_; }
    double omega_plus() const { return op_; }
    double tau() const { return tau_; }

    // Times where the profile is not smooth; integrators split there.
    std::vector<double> breakpoints() const {
        if (kind_ == Kind::Step) return {0.0};
        return {};
    }

    // Verifies the plateaus are reached at the edges of [t_lo, t_hi] to
    // relative tolerance rtol.
    void check_asymptotics(double t_lo, double t_hi, double rtol = 1e-6) const {
        const double lo = (*this)(t_lo), hi = (*this)(t_hi);
        if (std::abs(lo - om_) > rtol * std::abs(om_))
            throw std::domain_error("FrequencyProfile: in-plateau not reached at t = " +
                                    std::to_string(t_lo));
        if (std::abs(hi - op_) > rtol * std::abs(op_))
            throw std::domain_error("FrequencyProfile: out-plateau not reached at t = " +
                                    std::to_string(t_hi));
    }

private:
    FrequencyProfile(Kind k, double om, double op, double tau)
        : kind_(k), om_(om), op_(op), tau_(tau) {}

    Kind kind_;
    double om_, op_, tau_;
};

// Physical configuration of one reduced oscillator in the bath.
// Units hbar = m = 1; eps_r = kT is the real-noise power and mu the
// dissipation ratio, eps_i = mu * eps_r.
struct ModelParams {
    double omega_minus = 1.0;
    double omega_plus = 1.0;
    FrequencyProfile profile = FrequencyProfile::constant(1.0);
    double coupling = 0.0;   // oscillator-oscillator coupling, constant in t
    double eps_r = 0.0;
    double mu = 0.0;
    double t0 = 0.0;         // environment switch-on time

    void validate() const {
        if (!(omega_minus > 0.0)) throw std::domain_error("model.omega_minus must be > 0");
        if (!(omega_plus > 0.0))  throw std::domain_error("model.omega_plus must be > 0");
        if (!(eps_r >= 0.0))      throw std::domain_error("model.eps_r must be >= 0");
        if (!(mu >= 0.0 && mu <= 1.0))
            throw std::domain_error("model.mu must lie in [0,1]");
        if (std::abs(profile.omega_minus() - omega_minus) > 1e-12 * omega_minus ||
            std::abs(profile.omega_plus() - omega_plus) > 1e-12 * omega_plus)
            throw std::domain_error("model.profile plateaus disagree with omega_minus/omega_plus");
        // |coupling| <= Omega^2 must hold for all t; the extrema of the regular
        // profile are its plateaus, so checking both suffices.
        const double w2min = std::min(omega_minus * omega_minus, omega_plus * omega_plus);
        if (std::abs(coupling) > w2min)
            throw std::domain_error("model.coupling violates |w| <= Omega^2 at Omega^2 = " +
                                    std::to_string(w2min));
    }
};

// Effective squared frequencies of the decoupled normal modes,
// (W1^2, W2^2) = (W^2 + w, W^2 - w).  Throws if the non-negativity
// constraint is violated.
inline std::pair<double, double> effective_frequencies(double omega_sq, double coupling) {
    if (omega_sq < std::abs(coupling))
        throw std::domain_error("effective_frequencies: |coupling| = " +
                                std::to_string(std::abs(coupling)) +
                                " exceeds omega_sq = " + std::to_string(omega_sq));
    return {omega_sq + coupling, omega_sq - coupling};
}

// Normal coordinates of the two-oscillator system and their inverse.
inline std::pair<double, double> normal_coordinates(double x1, double x2) {
    const double s = 1.0 / std::sqrt(2.0);
    return {(x1 - x2) * s, (x1 + x2) * s};
}
inline std::pair<double, double> cartesian_coordinates(double q1, double q2) {
    const double s = 1.0 / std::sqrt(2.0);
    return {(q1 + q2) * s, (q2 - q1) * s};
}

// Dimensionless parameter set; all field-space computation runs in these
// units (u -> u/omega_plus, t -> omega_plus * t).
struct DimensionlessParams {
    double lambda = 0.0;     // eps_r / omega_plus^3
    double kappa = 2.0;      // 2 sqrt(omega_minus/omega_plus)
    double d = 1.0;          // sqrt(omega_plus/omega_minus)
    double mu = 0.0;
    double omega_plus = 1.0; // retained reference scale
    FrequencyProfile profile = FrequencyProfile::constant(1.0);
    double t0_bar = 0.0;

    // Scaled regular frequency at dimensionless time.
    double omega_bar(double t_bar) const { return profile(t_bar / omega_plus) / omega_plus; }
    // Scaled in-state frequency; drift fixed point before switching.
    double omega_bar_minus() const { return profile.omega_minus() / omega_plus; }
};

inline DimensionlessParams scale(const ModelParams& p) {
    p.validate();
    DimensionlessParams s;
    const double op = p.omega_plus;
    s.lambda = p.eps_r / (op * op * op);
    s.kappa = 2.0 * std::sqrt(p.omega_minus / op);
    s.d = std::sqrt(op / p.omega_minus);
    s.mu = p.mu;
    s.omega_plus = op;
    s.profile = p.profile;
    s.t0_bar = p.t0 * op;
    return s;
}

inline ModelParams unscale(const DimensionlessParams& s) {
    ModelParams p;
    p.omega_plus = s.omega_plus;
    p.omega_minus = s.omega_plus / (s.d * s.d);
    p.profile = s.profile;
    p.eps_r = s.lambda * s.omega_plus * s.omega_plus * s.omega_plus;
    p.mu = s.mu;
    p.t0 = s.t0_bar / s.omega_plus;
    return p;
}

} // namespace oscbath
