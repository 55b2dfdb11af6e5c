#include "stylefuse/reflow.hpp"

#include <algorithm>
#include <cmath>

namespace stylefuse {

void GaussianEndpoints::validate() const {
    const std::size_t d = mu0.size();
    if (d == 0) throw ShapeError("GaussianEndpoints: empty");
    if (mu1.size() != d || var0.size() != d || var1.size() != d) {
        throw ShapeError("GaussianEndpoints: coordinate counts differ");
    }
    for (std::size_t k = 0; k < d; ++k) {
        if (!std::isfinite(mu0[k]) || !std::isfinite(mu1[k]) || !std::isfinite(var0[k]) ||
            !std::isfinite(var1[k])) {
            throw InvalidInputError("GaussianEndpoints: non-finite entry");
        }
        if (var0[k] <= 0.0 || var1[k] <= 0.0) {
            throw InvalidInputError("GaussianEndpoints: variances must be positive");
        }
    }
}

std::vector<double> bridge_velocity(const std::vector<double>& x, double t,
                                    const GaussianEndpoints& ep) {
    ep.validate();
    if (x.size() != ep.dim()) throw ShapeError("bridge_velocity: state dimension differs");
    if (!std::isfinite(t) || t < 0.0 || t > 1.0) {
        throw InvalidInputError("bridge_velocity: t must lie in [0, 1]");
    }
    const double omt = 1.0 - t;
    std::vector<double> v(ep.dim());
    for (std::size_t k = 0; k < ep.dim(); ++k) {
        const double mean_t = omt * ep.mu0[k] + t * ep.mu1[k];
        const double var_t = omt * omt * ep.var0[k] + t * t * ep.var1[k];
        const double drift = (t * ep.var1[k] - omt * ep.var0[k]) / var_t;
        v[k] = (ep.mu1[k] - ep.mu0[k]) + drift * (x[k] - mean_t);
    }
    return v;
}

Trajectory euler_sample(const GaussianEndpoints& ep, std::size_t steps, Rng& rng) {
    ep.validate();
    if (steps == 0) throw InvalidInputError("euler_sample: steps must be >= 1");

    std::vector<double> x(ep.dim());
    for (std::size_t k = 0; k < ep.dim(); ++k) {
        x[k] = ep.mu0[k] + std::sqrt(ep.var0[k]) * rng.next_gaussian();
    }

    Trajectory out;
    out.times.reserve(steps + 1);
    out.states.reserve(steps + 1);
    out.times.push_back(0.0);
    out.states.push_back(x);

    const double dt = 1.0 / static_cast<double>(steps);
    for (std::size_t n = 0; n < steps; ++n) {
        const double t = static_cast<double>(n) * dt;
        const std::vector<double> v = bridge_velocity(x, t, ep);
        for (std::size_t k = 0; k < x.size(); ++k) x[k] += dt * v[k];
        out.times.push_back(static_cast<double>(n + 1) * dt);
        out.states.push_back(x);
    }
    return out;
}

double flow_loss(const GaussianEndpoints& ep, const VelocityField& field, std::size_t trials,
                 Rng& rng) {
    ep.validate();
    if (trials == 0) throw InvalidInputError("flow_loss: trials must be >= 1");
    const std::size_t d = ep.dim();
    std::vector<double> x0(d), x1(d), xt(d);
    KahanSum total;
    for (std::size_t n = 0; n < trials; ++n) {
        Rng trial_rng = rng.child(n);
        for (std::size_t k = 0; k < d; ++k) {
            x0[k] = ep.mu0[k] + std::sqrt(ep.var0[k]) * trial_rng.next_gaussian();
        }
        for (std::size_t k = 0; k < d; ++k) {
            x1[k] = ep.mu1[k] + std::sqrt(ep.var1[k]) * trial_rng.next_gaussian();
        }
        const double t = trial_rng.next_double();
        for (std::size_t k = 0; k < d; ++k) xt[k] = (1.0 - t) * x0[k] + t * x1[k];
        const std::vector<double> v = field(xt, t);
        if (v.size() != d) throw ShapeError("flow_loss: field returned wrong dimension");
        double sq = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double r = x1[k] - x0[k] - v[k];
            sq += r * r;
        }
        total.add(sq);
    }
    return total.value() / static_cast<double>(trials);
}

double straightness(const Trajectory& trajectory) {
    const auto& states = trajectory.states;
    if (states.size() < 3) return 0.0;
    const std::vector<double>& a = states.front();
    const std::vector<double>& b = states.back();
    const std::size_t d = a.size();

    std::vector<double> chord(d);
    double chord_sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        chord[k] = b[k] - a[k];
        chord_sq += chord[k] * chord[k];
    }
    if (chord_sq <= 1e-300) return 0.0;
    const double chord_len = std::sqrt(chord_sq);

    double worst = 0.0;
    for (std::size_t i = 1; i + 1 < states.size(); ++i) {
        // Perpendicular distance from states[i] to the chord line.
        double along = 0.0;
        for (std::size_t k = 0; k < d; ++k) along += (states[i][k] - a[k]) * chord[k];
        along /= chord_sq;
        double dist_sq = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double off = states[i][k] - a[k] - along * chord[k];
            dist_sq += off * off;
        }
        worst = std::max(worst, std::sqrt(dist_sq));
    }
    return worst / chord_len;
}

}  // namespace stylefuse
