#include "stylefuse/analysis.hpp"

#include <algorithm>
#include <cmath>

namespace stylefuse {

void BranchStats::validate() const {
    if (n_p == 0 || n_s == 0 || n_o == 0) {
        throw ShapeError("BranchStats: all block counts must be >= 1");
    }
    if (!std::isfinite(mu_p) || !std::isfinite(mu_s) || !std::isfinite(mu_o)) {
        throw InvalidInputError("BranchStats: block means must be finite");
    }
    if (!std::isfinite(sigma) || sigma < 0.0) {
        throw InvalidInputError("BranchStats: sigma must be finite and >= 0");
    }
}

double prop1_predicted_mass(const BranchStats& stats) {
    stats.validate();
    // Shift by the largest mean so the exponentials cannot overflow.
    const double m = std::max({stats.mu_p, stats.mu_s, stats.mu_o});
    const double wp = static_cast<double>(stats.n_p) * std::exp(stats.mu_p - m);
    const double ws = static_cast<double>(stats.n_s) * std::exp(stats.mu_s - m);
    const double wo = static_cast<double>(stats.n_o) * std::exp(stats.mu_o - m);
    return ws / (wp + ws + wo);
}

MonteCarloEstimate prop1_empirical_mass(const BranchStats& stats, std::size_t trials, Rng& rng) {
    stats.validate();
    if (trials == 0) throw InvalidInputError("prop1_empirical_mass: trials must be >= 1");

    const std::size_t cols = stats.n_p + stats.n_s + stats.n_o;
    const std::size_t rows = stats.n_o;
    Matrix z(rows, cols);

    KahanSum sum;
    KahanSum sum_sq;
    for (std::size_t t = 0; t < trials; ++t) {
        Rng trial_rng = rng.child(t);
        for (std::size_t i = 0; i < rows; ++i) {
            double* r = z.row(i);
            for (std::size_t j = 0; j < stats.n_p; ++j) {
                r[j] = stats.mu_p + stats.sigma * trial_rng.next_gaussian();
            }
            for (std::size_t j = 0; j < stats.n_s; ++j) {
                r[stats.n_p + j] = stats.mu_s + stats.sigma * trial_rng.next_gaussian();
            }
            for (std::size_t j = 0; j < stats.n_o; ++j) {
                r[stats.n_p + stats.n_s + j] = stats.mu_o + stats.sigma * trial_rng.next_gaussian();
            }
        }
        const Matrix alpha = row_softmax(z);
        KahanSum style_mass;
        for (std::size_t i = 0; i < rows; ++i) {
            const double* a = alpha.row(i);
            for (std::size_t j = 0; j < stats.n_s; ++j) style_mass.add(a[stats.n_p + j]);
        }
        const double value = style_mass.value() / static_cast<double>(rows);
        sum.add(value);
        sum_sq.add(value * value);
    }

    MonteCarloEstimate est;
    const double n = static_cast<double>(trials);
    est.mean = sum.value() / n;
    if (trials > 1) {
        const double variance =
            std::max(0.0, (sum_sq.value() - n * est.mean * est.mean) / (n - 1.0));
        est.std_err = std::sqrt(variance / n);
    }
    return est;
}

// ===== perturbations =====

void PerturbationSpec::validate() const {
    if (!std::isfinite(delta) || delta < 0.0) {
        throw InvalidInputError("PerturbationSpec.delta must be finite and >= 0");
    }
}

std::string to_string(PerturbKind kind) {
    switch (kind) {
        case PerturbKind::uniform_pm_delta: return "uniform_pm_delta";
        case PerturbKind::sign_delta: return "sign_delta";
        case PerturbKind::adversarial_rowmax: return "adversarial_rowmax";
    }
    return "unknown";
}

Matrix perturb_logits(const Matrix& z, const PerturbationSpec& spec, Rng& rng) {
    spec.validate();
    check_finite(z, "perturb_logits");
    Matrix out = z;
    switch (spec.kind) {
        case PerturbKind::uniform_pm_delta:
            for (double& v : out.data) v += spec.delta * (2.0 * rng.next_double() - 1.0);
            break;
        case PerturbKind::sign_delta:
            for (double& v : out.data) v += rng.next_double() < 0.5 ? -spec.delta : spec.delta;
            break;
        case PerturbKind::adversarial_rowmax:
            for (std::size_t i = 0; i < out.rows; ++i) {
                const double* in = z.row(i);
                std::size_t argmax = 0;
                for (std::size_t j = 1; j < z.cols; ++j) {
                    if (in[j] > in[argmax]) argmax = j;
                }
                double* o = out.row(i);
                for (std::size_t j = 0; j < out.cols; ++j) {
                    o[j] += j == argmax ? spec.delta : -spec.delta;
                }
            }
            break;
    }
    return out;
}

namespace {

void require_row_stochastic(const Matrix& m, const char* which) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        KahanSum sum;
        const double* r = m.row(i);
        for (std::size_t j = 0; j < m.cols; ++j) {
            if (r[j] < -1e-12) {
                throw InvalidInputError(std::string("tv_distance: ") + which +
                                        " has a negative entry");
            }
            sum.add(r[j]);
        }
        if (std::abs(sum.value() - 1.0) > 1e-9) {
            throw InvalidInputError(std::string("tv_distance: ") + which +
                                    " row does not sum to 1");
        }
    }
}

}  // namespace

std::vector<double> tv_distance(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ShapeError("tv_distance: shapes differ");
    require_row_stochastic(a, "first argument");
    require_row_stochastic(b, "second argument");
    std::vector<double> out(a.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        KahanSum acc;
        const double* ra = a.row(i);
        const double* rb = b.row(i);
        for (std::size_t j = 0; j < a.cols; ++j) acc.add(std::abs(ra[j] - rb[j]));
        out[i] = 0.5 * acc.value();
    }
    return out;
}

Prop2Bound prop2_bound(double delta) {
    if (!std::isfinite(delta) || delta < 0.0) {
        throw InvalidInputError("prop2_bound: delta must be finite and >= 0");
    }
    Prop2Bound out;
    out.tv_bound = -std::expm1(-2.0 * delta);  // 1 - e^{-2 delta}
    out.l1_bound = 2.0 * out.tv_bound;
    out.small_delta_asymptote = 4.0 * delta;
    return out;
}

// ===== reports =====

BoundReport make_bound_report(std::string check_name, double parameter, double empirical,
                              double bound, std::uint64_t trials, std::uint64_t seed) {
    BoundReport r;
    r.check_name = std::move(check_name);
    r.parameter = parameter;
    r.empirical = empirical;
    r.bound = bound;
    r.slack = bound - empirical;
    r.satisfied = empirical <= bound + kBoundSlackTolerance;
    r.trials = trials;
    r.seed = seed;
    return r;
}

BoundReport check_prop2(const Matrix& z, const PerturbationSpec& spec, std::size_t trials,
                        Rng& rng) {
    spec.validate();
    if (trials == 0) throw InvalidInputError("check_prop2: trials must be >= 1");
    const Matrix alpha = row_softmax(z);
    double worst = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        Rng trial_rng = rng.child(t);
        const Matrix alpha_tilde = row_softmax(perturb_logits(z, spec, trial_rng));
        for (double tv : tv_distance(alpha_tilde, alpha)) worst = std::max(worst, tv);
    }
    return make_bound_report("prop2_tv_" + to_string(spec.kind), spec.delta, worst,
                             prop2_bound(spec.delta).tv_bound, trials, rng.seed());
}

double output_perturbation_bound(const QkvBlocks& qkv, double delta) {
    const double factor = 2.0 * -std::expm1(-2.0 * delta);
    return factor * (max_row_l2(qkv.v_p) + max_row_l2(qkv.v_s) + max_row_l2(qkv.v_o));
}

DssiPerturbationTerms dssi_perturbation_terms(const BlockAttention& clean_attn,
                                              const AlignmentStrengths& clean,
                                              const BlockAttention& noisy_attn,
                                              const AlignmentStrengths& noisy,
                                              const QkvBlocks& qkv, double kappa) {
    if (!clean_attn.alpha_p.same_shape(noisy_attn.alpha_p) ||
        !clean_attn.alpha_s.same_shape(noisy_attn.alpha_s) ||
        !clean_attn.alpha_o.same_shape(noisy_attn.alpha_o)) {
        throw ShapeError("dssi_perturbation_terms: clean/noisy attention shapes differ");
    }
    const double norm_vp = max_row_l2(qkv.v_p);
    const double norm_vs = max_row_l2(qkv.v_s);
    const double norm_vo = max_row_l2(qkv.v_o);
    const double lambda = clean.lambda_star;
    const double dlambda = std::abs(noisy.lambda_star - clean.lambda_star);

    const Matrix dp = sub(noisy_attn.alpha_p, clean_attn.alpha_p);
    const Matrix ds = sub(noisy_attn.alpha_s, clean_attn.alpha_s);
    const Matrix d_o = sub(noisy_attn.alpha_o, clean_attn.alpha_o);

    DssiPerturbationTerms out;
    double worst_total = 0.0;
    for (std::size_t i = 0; i < clean_attn.alpha_p.rows; ++i) {
        const double t1 = kappa * ((1.0 - lambda) * row_l1(dp, i) * norm_vp +
                                   lambda * row_l1(ds, i) * norm_vs);
        const double t2 = kappa * dlambda *
                          (row_l1(noisy_attn.alpha_p, i) * norm_vp +
                           row_l1(noisy_attn.alpha_s, i) * norm_vs);
        const double t3 = row_l1(d_o, i) * norm_vo;
        out.term1 = std::max(out.term1, t1);
        out.term2 = std::max(out.term2, t2);
        out.term3 = std::max(out.term3, t3);
        worst_total = std::max(worst_total, t1 + t2 + t3);
    }
    out.total_bound = worst_total;
    const double base = out.term1 + out.term3;
    out.term2_ratio = base > 0.0 ? out.term2 / base : 0.0;
    return out;
}

double prop3_bound(double lambda_p, double lambda_s, double eps_p, double eps_s) {
    if (!(lambda_p > 0.0) || !(lambda_s > 0.0)) {
        throw InvalidInputError("prop3_bound: alignment strengths must be positive");
    }
    if (eps_p < 0.0 || eps_s < 0.0 || !std::isfinite(eps_p) || !std::isfinite(eps_s)) {
        throw InvalidInputError("prop3_bound: eps values must be finite and >= 0");
    }
    return std::max(eps_p, eps_s) / (lambda_p + lambda_s);
}

QkvBlocks random_qkv(std::size_t d, std::size_t n_p, std::size_t n_s, std::size_t n_o, Rng& rng) {
    QkvBlocks qkv;
    qkv.q_p = gaussian_matrix(n_p, d, 0.0, 1.0, rng);
    qkv.q_s = gaussian_matrix(n_s, d, 0.0, 1.0, rng);
    qkv.q_o = gaussian_matrix(n_o, d, 0.0, 1.0, rng);
    qkv.k_p = gaussian_matrix(n_p, d, 0.0, 1.0, rng);
    qkv.k_s = gaussian_matrix(n_s, d, 0.0, 1.0, rng);
    qkv.k_o = gaussian_matrix(n_o, d, 0.0, 1.0, rng);
    qkv.v_p = gaussian_matrix(n_p, d, 0.0, 1.0, rng);
    qkv.v_s = gaussian_matrix(n_s, d, 0.0, 1.0, rng);
    qkv.v_o = gaussian_matrix(n_o, d, 0.0, 1.0, rng);
    return qkv;
}

}  // namespace stylefuse
