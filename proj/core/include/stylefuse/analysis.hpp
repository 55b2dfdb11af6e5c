#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stylefuse/dssi.hpp"

namespace stylefuse {

// ===== branch-mass prediction (softmax mean-field approximation) =====

// Logit population: block b contributes n_b columns with entries
// mu_b + Normal(0, sigma^2), independent across entries.
struct BranchStats {
    std::size_t n_p = 0;
    std::size_t n_s = 0;
    std::size_t n_o = 0;
    double mu_p = 0.0;
    double mu_s = 0.0;
    double mu_o = 0.0;
    double sigma = 0.0;

    void validate() const;
};

// Predicted style-branch row mass
//   n_s e^{mu_s} / (n_p e^{mu_p} + n_s e^{mu_s} + n_o e^{mu_o}),
// the sigma -> 0 limit; the approximation error grows as O(sigma^3) and the
// checkers budget 10 * sigma^3 for it.
double prop1_predicted_mass(const BranchStats& stats);

struct MonteCarloEstimate {
    double mean = 0.0;
    double std_err = 0.0;
};

// Monte-Carlo estimate of the same quantity: each trial draws an
// n_o x (n_p+n_s+n_o) logit matrix, softmaxes every row over the full axis,
// and averages the style block's row mass.
MonteCarloEstimate prop1_empirical_mass(const BranchStats& stats, std::size_t trials, Rng& rng);

// ===== logit perturbations =====

enum class PerturbKind {
    uniform_pm_delta,    // iid Uniform[-delta, +delta]
    sign_delta,          // iid +delta or -delta with equal probability
    adversarial_rowmax,  // +delta at each row's argmax, -delta elsewhere
};

struct PerturbationSpec {
    PerturbKind kind = PerturbKind::uniform_pm_delta;
    double delta = 0.0;

    void validate() const;
};

std::string to_string(PerturbKind kind);

// Z + eps with ||eps||_inf <= delta according to `spec`. adversarial_rowmax
// is deterministic (rng unused); ties resolve to the first maximum.
Matrix perturb_logits(const Matrix& z, const PerturbationSpec& spec, Rng& rng);

// Per-row total variation distance 0.5 * ||a_i - b_i||_1 between two
// row-stochastic matrices of equal shape.
std::vector<double> tv_distance(const Matrix& a, const Matrix& b);

// Softmax-stability bounds for a logit perturbation of sup-norm delta.
struct Prop2Bound {
    double tv_bound = 0.0;              // 1 - e^{-2 delta}
    double l1_bound = 0.0;              // 2 (1 - e^{-2 delta})
    double small_delta_asymptote = 0.0; // 4 delta (leading order of l1_bound)
};

Prop2Bound prop2_bound(double delta);

// ===== bound reports =====

// One empirical-vs-analytic comparison. satisfied <=> empirical <= bound +
// 1e-12; slack = bound - empirical. `parameter` carries the delta or sigma
// the check ran at.
struct BoundReport {
    std::string check_name;
    double parameter = 0.0;
    double empirical = 0.0;
    double bound = 0.0;
    bool satisfied = false;
    double slack = 0.0;
    std::uint64_t trials = 0;
    std::uint64_t seed = 0;
};

// Slack tolerance shared by every bound check in the project.
inline constexpr double kBoundSlackTolerance = 1e-12;

BoundReport make_bound_report(std::string check_name, double parameter, double empirical,
                              double bound, std::uint64_t trials, std::uint64_t seed);

// Max-over-rows-and-trials TV between softmax(Z) and softmax(Z + eps),
// compared against prop2_bound(delta).tv_bound. The same Z is perturbed
// `trials` times with independent child streams of rng.
BoundReport check_prop2(const Matrix& z, const PerturbationSpec& spec, std::size_t trials,
                        Rng& rng);

// Worst-case row bound for the unfused output under a logit perturbation of
// sup-norm delta: 2 (1 - e^{-2 delta}) (||V_p|| + ||V_s|| + ||V_o||), where
// ||V_b|| is the largest row l2 norm of that value block. Holds row-wise
// for ||h~_o - h_o||_2.
double output_perturbation_bound(const QkvBlocks& qkv, double delta);

// Three-part bound on a row of h~ - h for the reweighted output under a
// logit perturbation, evaluated from measured clean/noisy attention:
//   term1: branch attention drift at frozen weights
//   term2: weight drift |lambda~ - lambda| at the noisy attention
//   term3: own-output attention drift
// All alpha factors are row l1 norms and all value factors are max row l2
// norms, which is what makes each term a valid row bound; kappa multiplies
// the prompt/style terms because the fused output carries it there.
// Reported values are maxima over rows; total_bound is the max over rows of
// the per-row three-term sum (so empirical row diffs are <= total_bound).
struct DssiPerturbationTerms {
    double term1 = 0.0;
    double term2 = 0.0;
    double term3 = 0.0;
    double total_bound = 0.0;
    double term2_ratio = 0.0;  // term2 / (term1 + term3), 0 when undefined
};

DssiPerturbationTerms dssi_perturbation_terms(const BlockAttention& clean_attn,
                                              const AlignmentStrengths& clean,
                                              const BlockAttention& noisy_attn,
                                              const AlignmentStrengths& noisy,
                                              const QkvBlocks& qkv, double kappa);

// |lambda~* - lambda*| <= max(eps_p, eps_s) / (lambda_p + lambda_s) for
// alignment perturbations |lambda~_b - lambda_b| <= eps_b that keep both
// strengths nonnegative.
double prop3_bound(double lambda_p, double lambda_s, double eps_p, double eps_s);

// Gaussian Q/K/V blocks (entries N(0,1)) for Monte-Carlo instances.
QkvBlocks random_qkv(std::size_t d, std::size_t n_p, std::size_t n_s, std::size_t n_o, Rng& rng);

}  // namespace stylefuse
