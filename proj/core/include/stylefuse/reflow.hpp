#pragma once

#include <functional>
#include <vector>

#include "stylefuse/linalg.hpp"

namespace stylefuse {

// Independent coordinatewise Gaussian endpoint distributions pi_0 and pi_1
// for the linear interpolation path x_t = (1-t) x_0 + t x_1.
struct GaussianEndpoints {
    std::vector<double> mu0;
    std::vector<double> mu1;
    std::vector<double> var0;
    std::vector<double> var1;

    std::size_t dim() const { return mu0.size(); }

    // Throws on mismatched lengths, non-finite entries, or var <= 0.
    void validate() const;
};

// Marginal velocity E[x_1 - x_0 | x_t = x] of the interpolation, per
// coordinate k:
//   (mu1_k - mu0_k)
//   + (t var1_k - (1-t) var0_k) / ((1-t)^2 var0_k + t^2 var1_k)
//     * (x_k - ((1-t) mu0_k + t mu1_k)).
// Defined for t in [0, 1]; the denominator is positive for positive
// variances.
std::vector<double> bridge_velocity(const std::vector<double>& x, double t,
                                    const GaussianEndpoints& ep);

struct Trajectory {
    std::vector<double> times;                 // steps + 1 entries, 0 .. 1
    std::vector<std::vector<double>> states;   // one state per time
};

// Integrates dx/dt = bridge_velocity(x, t) with forward Euler from a fresh
// draw x_0 ~ pi_0 over `steps` uniform steps.
Trajectory euler_sample(const GaussianEndpoints& ep, std::size_t steps, Rng& rng);

using VelocityField = std::function<std::vector<double>(const std::vector<double>&, double)>;

// Monte-Carlo estimate of E ||x_1 - x_0 - v(x_t, t)||^2 with x_0 ~ pi_0,
// x_1 ~ pi_1, t ~ Uniform[0, 1). The exact bridge field minimizes this over
// all fields, so candidate fields can be ranked against it with a shared
// seed (common random numbers).
double flow_loss(const GaussianEndpoints& ep, const VelocityField& field, std::size_t trials,
                 Rng& rng);

// Max over interior states of the perpendicular distance to the chord
// between the first and last state, divided by the chord length. 0 for
// straight paths; 0.5 for a semicircular arc. Returns 0 when the chord is
// degenerate or there are fewer than 3 states.
double straightness(const Trajectory& trajectory);

}  // namespace stylefuse
