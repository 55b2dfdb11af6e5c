#pragma once

#include <cstdint>
#include <vector>

#include "stylefuse/analysis.hpp"
#include "stylefuse/config.hpp"

namespace stylefuse {

// Numerical verification batteries. Every battery derives all randomness
// from fixed child streams of `seed`, and `threads` only changes how cells
// are scheduled — row order and every reported number are identical for any
// thread count. Two report styles appear:
//   direct:     empirical quantity vs a fixed analytic bound
//   difference: empirical = max over trials of (observed - per-trial bound),
//               reported against a bound of 0
//
// Most rows check an inequality that holds with margin; the marginal-
// statistics rows in the reflow battery are 3-sigma Monte-Carlo checks and
// are validated for the shipped default seed.

// Softmax stability: max row TV between softmax(Z) and softmax(Z + eps)
// vs 1 - e^{-2 delta}, over deltas x row widths x perturbation kinds, a
// fresh random Z per trial. >= 1e5 trials total.
std::vector<BoundReport> prop2_battery(std::uint64_t seed, int threads);

// Mean-field branch-mass prediction vs Monte Carlo over a grid of block
// sizes, mean offsets, and sigma, 1e4 trials per cell; tolerance per cell
// is max(10 sigma^3, 5 std_err).
std::vector<BoundReport> prop1_battery(std::uint64_t seed, int threads);

// Closed-form minimizer of the reference loss vs a lambda grid of step
// 1e-3 (normalized undercut vs 1e-9), plus a finite-difference check of
// the constant curvature 2 D (1 + gamma).
std::vector<BoundReport> lambda_star_battery(std::uint64_t seed);

// Weight-drift bound |lambda~* - lambda*| <= max(eps)/(lambda_p+lambda_s)
// on a deterministic corner grid and random interior draws, with clamped
// perturbed strengths.
std::vector<BoundReport> prop3_battery(std::uint64_t seed);

// Alignment-strength drift under logit perturbations: max(eps_p, eps_s)
// <= 2 delta across random attention instances and all perturbation kinds.
std::vector<BoundReport> alignment_drift_battery(std::uint64_t seed, int threads);

// Output-row perturbation bounds: unfused drift vs its analytic bound,
// reweighted drift vs the measured three-term bound (kappa = 1), the
// three-term total never exceeding the unfused bound in the balanced
// regime, and the weight-drift term staying a small share of the total.
std::vector<BoundReport> output_bound_battery(std::uint64_t seed, int threads);

// All of the above, in order, seeded from cfg.pipeline.seed. When
// cfg.verify.inject_violation is set, one deliberately failing row is
// appended so the violation exit path can be exercised.
std::vector<BoundReport> verify_propositions_battery(const DriverConfig& cfg, int threads);

// Flow-sampler checks: Euler marginals vs closed-form mean/variance at
// t in {0.5, 1} (3-sigma), the conditional-expectation field strictly
// beating a family of perturbed fields on the matching loss (common random
// numbers), and first-order endpoint convergence (log-log slope -1 +- 0.2
// over steps 2..256). Single-threaded and deterministic.
std::vector<BoundReport> reflow_battery(std::uint64_t seed);

}  // namespace stylefuse
