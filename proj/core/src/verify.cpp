#include "stylefuse/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <limits>

#include "stylefuse/reflow.hpp"

namespace stylefuse {

namespace {

// Fixed child-stream slots of the master seed, one per battery, so adding
// rows to one battery never reseeds another.
constexpr std::uint64_t kProp2Stream = 101;
constexpr std::uint64_t kProp1Stream = 102;
constexpr std::uint64_t kLambdaStarStream = 103;
constexpr std::uint64_t kProp3Stream = 104;
constexpr std::uint64_t kAlignmentStream = 105;
constexpr std::uint64_t kOutputBoundStream = 106;
constexpr std::uint64_t kTerm2Stream = 107;
constexpr std::uint64_t kReflowStream = 108;

std::string format_name(const char* fmt, ...) {
    char buf[160];
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buf, sizeof(buf), fmt, args);
    va_end(args);
    return std::string(buf);
}

double max_row_l2_diff(const Matrix& a, const Matrix& b) { return max_row_l2(sub(a, b)); }

// ===== softmax stability (per-row TV vs 1 - e^{-2 delta}) =====

struct Prop2Cell {
    double delta = 0.0;
    std::size_t dim = 0;
    PerturbKind kind = PerturbKind::uniform_pm_delta;
};

}  // namespace

std::vector<BoundReport> prop2_battery(std::uint64_t seed, int threads) {
    const double deltas[] = {0.01, 0.1, 0.3, 1.0, 2.0};
    const std::size_t dims[] = {2, 8, 64, 512};
    const PerturbKind kinds[] = {PerturbKind::uniform_pm_delta, PerturbKind::sign_delta,
                                 PerturbKind::adversarial_rowmax};
    constexpr std::size_t kTrialsPerCell = 1667;  // 60 cells -> 100,020 trials

    std::vector<Prop2Cell> cells;
    for (double delta : deltas) {
        for (std::size_t dim : dims) {
            for (PerturbKind kind : kinds) cells.push_back({delta, dim, kind});
        }
    }

    const Rng base = Rng(seed).child(kProp2Stream);
    std::vector<BoundReport> rows(cells.size());
    parallel_for_index(cells.size(), threads, [&](std::size_t i) {
        const Prop2Cell& cell = cells[i];
        const Rng cell_rng = base.child(i);
        const PerturbationSpec spec{cell.kind, cell.delta};
        double worst = 0.0;
        for (std::size_t t = 0; t < kTrialsPerCell; ++t) {
            Rng trial_rng = cell_rng.child(t);
            const Matrix z = gaussian_matrix(1, cell.dim, 0.0, 1.0, trial_rng);
            const Matrix zt = perturb_logits(z, spec, trial_rng);
            const std::vector<double> tv = tv_distance(row_softmax(z), row_softmax(zt));
            worst = std::max(worst, tv[0]);
        }
        rows[i] = make_bound_report(
            format_name("prop2_tv_%s_dim%zu", to_string(cell.kind).c_str(), cell.dim),
            cell.delta, worst, prop2_bound(cell.delta).tv_bound, kTrialsPerCell,
            cell_rng.seed());
    });
    return rows;
}

// ===== branch-mass prediction vs Monte Carlo =====

std::vector<BoundReport> prop1_battery(std::uint64_t seed, int threads) {
    struct Sizes {
        std::size_t p, s, o;
    };
    const Sizes size_grid[] = {{4, 4, 4}, {16, 16, 16}, {64, 64, 64}, {4, 64, 16}, {64, 4, 16}};
    const double mu_grid[][3] = {
        {0.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {1.0, 0.0, 0.0}, {0.0, -1.0, 1.0}, {3.0, 0.0, -3.0}};
    const double sigmas[] = {0.05, 0.1, 0.2};
    constexpr std::size_t kTrialsPerCell = 10000;

    std::vector<BranchStats> cells;
    for (const Sizes& n : size_grid) {
        for (const auto& mu : mu_grid) {
            for (double sigma : sigmas) {
                BranchStats stats;
                stats.n_p = n.p;
                stats.n_s = n.s;
                stats.n_o = n.o;
                stats.mu_p = mu[0];
                stats.mu_s = mu[1];
                stats.mu_o = mu[2];
                stats.sigma = sigma;
                cells.push_back(stats);
            }
        }
    }

    const Rng base = Rng(seed).child(kProp1Stream);
    std::vector<BoundReport> rows(cells.size());
    parallel_for_index(cells.size(), threads, [&](std::size_t i) {
        const BranchStats& stats = cells[i];
        Rng cell_rng = base.child(i);
        const MonteCarloEstimate est = prop1_empirical_mass(stats, kTrialsPerCell, cell_rng);
        const double predicted = prop1_predicted_mass(stats);
        const double empirical = std::abs(est.mean - predicted);
        const double budget = 10.0 * stats.sigma * stats.sigma * stats.sigma;
        const double bound = std::max(budget, 5.0 * est.std_err);
        rows[i] = make_bound_report(
            format_name("prop1_mass_N%zu.%zu.%zu_mu%g.%g.%g", stats.n_p, stats.n_s, stats.n_o,
                        stats.mu_p, stats.mu_s, stats.mu_o),
            stats.sigma, empirical, bound, kTrialsPerCell, cell_rng.seed());
    });
    return rows;
}

// ===== closed-form minimizer vs grid search =====

std::vector<BoundReport> lambda_star_battery(std::uint64_t seed) {
    constexpr std::size_t kDraws = 1000;
    constexpr std::size_t kGridPoints = 1001;  // step 1e-3 on [0, 1]
    constexpr double kGridStep = 1e-3;
    constexpr double kFdStep = 0.01;

    const Rng base = Rng(seed).child(kLambdaStarStream);
    double worst_undercut = -std::numeric_limits<double>::infinity();
    double worst_curvature = 0.0;

    for (std::size_t k = 0; k < kDraws; ++k) {
        Rng draw_rng = base.child(k);
        const double gamma = std::exp(6.0 * draw_rng.next_double() - 3.0);
        const Matrix s = gaussian_matrix(4, 3, 0.0, 1.0, draw_rng);
        const Matrix t = gaussian_matrix(4, 3, 0.0, 1.0, draw_rng);
        const double fn = frobenius_norm(sub(t, s));
        const double d_sq = fn * fn;

        const double star = lambda_star(gamma);
        const double loss_star = dssi_loss(star, s, t, gamma);
        double grid_min = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < kGridPoints; ++j) {
            grid_min = std::min(grid_min, dssi_loss(kGridStep * static_cast<double>(j), s, t,
                                                    gamma));
        }
        worst_undercut =
            std::max(worst_undercut, (loss_star - grid_min) / std::max(d_sq, 1e-300));

        // The objective is an exact quadratic in lambda, so a central second
        // difference must reproduce the constant curvature 2 D (1 + gamma)
        // to within roundoff.
        const double target = 2.0 * d_sq * (1.0 + gamma);
        for (double at : {0.25, 0.75}) {
            const double fd = (dssi_loss(at + kFdStep, s, t, gamma) -
                               2.0 * dssi_loss(at, s, t, gamma) +
                               dssi_loss(at - kFdStep, s, t, gamma)) /
                              (kFdStep * kFdStep);
            worst_curvature = std::max(worst_curvature, std::abs(fd - target) / target);
        }
    }

    std::vector<BoundReport> rows;
    rows.push_back(make_bound_report("lambda_star_grid_undercut", kGridStep, worst_undercut,
                                     1e-9, kDraws * kGridPoints, base.seed()));
    rows.push_back(make_bound_report("lambda_star_curvature_fd", kFdStep, worst_curvature, 1e-6,
                                     kDraws * 2, base.seed()));
    return rows;
}

// ===== weight-drift bound on clamped alignment strengths =====

namespace {

double clamped_weight(double lambda_p, double lambda_s) {
    return lambda_p / (lambda_p + lambda_s);
}

}  // namespace

std::vector<BoundReport> prop3_battery(std::uint64_t seed) {
    constexpr double kFloor = 1e-6;
    const Rng base = Rng(seed).child(kProp3Stream);
    std::vector<BoundReport> rows;

    {
        const double lambdas[] = {1e-6, 1e-3, 0.1, 0.5, 1.0, 2.0, 5.0};
        const double epsilons[] = {0.0, 0.01, 0.1, 0.5, 1.0, 2.0};
        double worst = -std::numeric_limits<double>::infinity();
        std::uint64_t cases = 0;
        for (double lp : lambdas) {
            for (double ls : lambdas) {
                for (double ep : epsilons) {
                    for (double es : epsilons) {
                        for (int corner = 0; corner < 4; ++corner) {
                            const double sp = (corner & 1) ? 1.0 : -1.0;
                            const double ss = (corner & 2) ? 1.0 : -1.0;
                            const double lpt = std::max(lp + sp * ep, kFloor);
                            const double lst = std::max(ls + ss * es, kFloor);
                            const double drift = std::abs(clamped_weight(lpt, lst) -
                                                          clamped_weight(lp, ls));
                            worst = std::max(worst, drift - prop3_bound(lp, ls, ep, es));
                            ++cases;
                        }
                    }
                }
            }
        }
        rows.push_back(make_bound_report("prop3_weight_drift_corners", 0.0, worst, 0.0, cases,
                                         base.seed()));
    }

    {
        constexpr std::size_t kTrials = 10000;
        double worst = -std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < kTrials; ++t) {
            Rng r = base.child(t);
            const double lp = std::exp(-13.0 + 15.0 * r.next_double());
            const double ls = std::exp(-13.0 + 15.0 * r.next_double());
            const double ep = std::exp(-7.0 + 8.0 * r.next_double());
            const double es = std::exp(-7.0 + 8.0 * r.next_double());
            const double lpt = std::max(lp + (2.0 * r.next_double() - 1.0) * ep, kFloor);
            const double lst = std::max(ls + (2.0 * r.next_double() - 1.0) * es, kFloor);
            const double drift =
                std::abs(clamped_weight(lpt, lst) - clamped_weight(lp, ls));
            worst = std::max(worst, drift - prop3_bound(lp, ls, ep, es));
        }
        rows.push_back(make_bound_report("prop3_weight_drift_interior", 0.0, worst, 0.0, kTrials,
                                         base.seed()));
    }
    return rows;
}

// ===== alignment drift under logit perturbations =====

namespace {

// Shared instance geometry for the attention-level Monte-Carlo batteries:
// small enough to be fast, large enough that all three blocks carry
// distinct mass.
constexpr std::size_t kMcDim = 16;
constexpr std::size_t kMcPrompt = 8;
constexpr std::size_t kMcStyle = 16;
constexpr std::size_t kMcOutput = 32;

struct McInstance {
    QkvBlocks qkv;
    Matrix logits;
    BlockAttention attn;
    AlignmentStrengths clean;
};

McInstance make_mc_instance(const Rng& inst_rng, const DssiConfig& cfg) {
    McInstance inst;
    Rng qkv_rng = inst_rng.child(0);
    inst.qkv = random_qkv(kMcDim, kMcPrompt, kMcStyle, kMcOutput, qkv_rng);
    inst.logits = output_logits(inst.qkv);
    inst.attn = block_attention_from_logits(inst.logits, kMcPrompt, kMcStyle, kMcOutput);
    inst.clean = alignment_strengths(inst.attn, cfg);
    return inst;
}

DssiConfig unit_kappa_config() {
    DssiConfig cfg;
    cfg.kappa = 1.0;
    cfg.mode = FusionMode::dssi;
    return cfg;
}

}  // namespace

std::vector<BoundReport> alignment_drift_battery(std::uint64_t seed, int threads) {
    const double deltas[] = {0.05, 0.1, 0.3};
    constexpr std::size_t kInstances = 12;
    constexpr std::size_t kRandomTrials = 417;  // x2 kinds + 1 adversarial = 835/instance
    const DssiConfig cfg = unit_kappa_config();
    const Rng base = Rng(seed).child(kAlignmentStream);

    std::vector<BoundReport> rows;
    for (std::size_t a = 0; a < 3; ++a) {
        const double delta = deltas[a];
        const Rng dbase = base.child(a);
        std::vector<double> worst(kInstances, 0.0);
        std::uint64_t trials_per_instance = 0;

        parallel_for_index(kInstances, threads, [&](std::size_t j) {
            const Rng inst_rng = dbase.child(j);
            const McInstance inst = make_mc_instance(inst_rng, cfg);
            double w = 0.0;
            std::uint64_t count = 0;
            const PerturbKind kinds[] = {PerturbKind::uniform_pm_delta, PerturbKind::sign_delta,
                                         PerturbKind::adversarial_rowmax};
            for (std::size_t ki = 0; ki < 3; ++ki) {
                const PerturbationSpec spec{kinds[ki], delta};
                const std::size_t reps =
                    kinds[ki] == PerturbKind::adversarial_rowmax ? 1 : kRandomTrials;
                for (std::size_t r = 0; r < reps; ++r) {
                    Rng pr = inst_rng.child(1000 + ki * 1000 + r);
                    const Matrix zt = perturb_logits(inst.logits, spec, pr);
                    const BlockAttention at =
                        block_attention_from_logits(zt, kMcPrompt, kMcStyle, kMcOutput);
                    const AlignmentStrengths noisy = alignment_strengths(at, cfg);
                    const double eps = std::max(std::abs(noisy.lambda_p - inst.clean.lambda_p),
                                                std::abs(noisy.lambda_s - inst.clean.lambda_s));
                    w = std::max(w, eps);
                    ++count;
                }
            }
            worst[j] = w;
            if (j == 0) trials_per_instance = count;
        });

        double empirical = 0.0;
        for (double w : worst) empirical = std::max(empirical, w);
        rows.push_back(make_bound_report("alignment_drift_max_eps", delta, empirical,
                                         2.0 * delta, trials_per_instance * kInstances,
                                         dbase.seed()));
    }
    return rows;
}

// ===== output-row perturbation bounds =====

std::vector<BoundReport> output_bound_battery(std::uint64_t seed, int threads) {
    const double deltas[] = {0.05, 0.3, 1.0};
    constexpr std::size_t kInstances = 10;
    constexpr std::size_t kRandomTrials = 167;  // x2 kinds + 1 adversarial = 335/instance
    const DssiConfig cfg = unit_kappa_config();
    const Rng base = Rng(seed).child(kOutputBoundStream);

    std::vector<BoundReport> rows;
    for (std::size_t a = 0; a < 3; ++a) {
        const double delta = deltas[a];
        const Rng dbase = base.child(a);

        struct InstanceMax {
            double vanilla_excess = -std::numeric_limits<double>::infinity();
            double dssi_excess = -std::numeric_limits<double>::infinity();
            double tight_excess = -std::numeric_limits<double>::infinity();
            std::uint64_t trials = 0;
            std::uint64_t tight_trials = 0;
        };
        std::vector<InstanceMax> acc(kInstances);

        parallel_for_index(kInstances, threads, [&](std::size_t j) {
            const Rng inst_rng = dbase.child(j);
            const McInstance inst = make_mc_instance(inst_rng, cfg);
            const Matrix h_vanilla = fuse_vanilla(inst.attn, inst.qkv);
            const Matrix h_dssi = dssi_output(inst.qkv, inst.attn, cfg);
            const double vanilla_bound = output_perturbation_bound(inst.qkv, delta);
            const bool balanced =
                inst.clean.lambda_star > 0.05 && inst.clean.lambda_star < 0.95;

            InstanceMax m;
            const PerturbKind kinds[] = {PerturbKind::uniform_pm_delta, PerturbKind::sign_delta,
                                         PerturbKind::adversarial_rowmax};
            for (std::size_t ki = 0; ki < 3; ++ki) {
                const PerturbationSpec spec{kinds[ki], delta};
                const std::size_t reps =
                    kinds[ki] == PerturbKind::adversarial_rowmax ? 1 : kRandomTrials;
                for (std::size_t r = 0; r < reps; ++r) {
                    Rng pr = inst_rng.child(1000 + ki * 1000 + r);
                    const Matrix zt = perturb_logits(inst.logits, spec, pr);
                    const BlockAttention at =
                        block_attention_from_logits(zt, kMcPrompt, kMcStyle, kMcOutput);
                    const AlignmentStrengths noisy = alignment_strengths(at, cfg);

                    const double van_drift =
                        max_row_l2_diff(fuse_vanilla(at, inst.qkv), h_vanilla);
                    m.vanilla_excess = std::max(m.vanilla_excess, van_drift - vanilla_bound);

                    const DssiPerturbationTerms terms = dssi_perturbation_terms(
                        inst.attn, inst.clean, at, noisy, inst.qkv, cfg.kappa);
                    const double dssi_drift =
                        max_row_l2_diff(dssi_output(inst.qkv, at, cfg), h_dssi);
                    m.dssi_excess = std::max(m.dssi_excess, dssi_drift - terms.total_bound);

                    if (balanced) {
                        m.tight_excess =
                            std::max(m.tight_excess, terms.total_bound - vanilla_bound);
                        ++m.tight_trials;
                    }
                    ++m.trials;
                }
            }
            acc[j] = m;
        });

        InstanceMax total;
        total.vanilla_excess = total.dssi_excess = total.tight_excess =
            -std::numeric_limits<double>::infinity();
        for (const InstanceMax& m : acc) {
            total.vanilla_excess = std::max(total.vanilla_excess, m.vanilla_excess);
            total.dssi_excess = std::max(total.dssi_excess, m.dssi_excess);
            total.tight_excess = std::max(total.tight_excess, m.tight_excess);
            total.trials += m.trials;
            total.tight_trials += m.tight_trials;
        }
        rows.push_back(make_bound_report("output_drift_vanilla", delta, total.vanilla_excess,
                                         0.0, total.trials, dbase.seed()));
        rows.push_back(make_bound_report("output_drift_dssi", delta, total.dssi_excess, 0.0,
                                         total.trials, dbase.seed()));
        rows.push_back(make_bound_report("dssi_vs_vanilla_tightness", delta, total.tight_excess,
                                         0.0, total.tight_trials, dbase.seed()));
    }

    {
        // Weight-drift share of the three-term bound in the balanced regime
        // (gamma within [0.5, 2]), under uniform perturbations.
        constexpr double kDelta = 0.1;
        constexpr std::size_t kShareInstances = 30;
        constexpr std::size_t kShareTrials = 334;
        const Rng sbase = Rng(seed).child(kTerm2Stream);
        const PerturbationSpec spec{PerturbKind::uniform_pm_delta, kDelta};

        std::vector<double> share(kShareInstances, -1.0);
        std::vector<std::uint64_t> counted(kShareInstances, 0);
        parallel_for_index(kShareInstances, threads, [&](std::size_t j) {
            const Rng inst_rng = sbase.child(j);
            const McInstance inst = make_mc_instance(inst_rng, cfg);
            if (inst.clean.gamma < 0.5 || inst.clean.gamma > 2.0) return;
            double w = -1.0;
            for (std::size_t r = 0; r < kShareTrials; ++r) {
                Rng pr = inst_rng.child(1000 + r);
                const Matrix zt = perturb_logits(inst.logits, spec, pr);
                const BlockAttention at =
                    block_attention_from_logits(zt, kMcPrompt, kMcStyle, kMcOutput);
                const AlignmentStrengths noisy = alignment_strengths(at, cfg);
                const DssiPerturbationTerms terms = dssi_perturbation_terms(
                    inst.attn, inst.clean, at, noisy, inst.qkv, cfg.kappa);
                w = std::max(w, terms.term2_ratio);
            }
            share[j] = w;
            counted[j] = kShareTrials;
        });

        double empirical = -1.0;
        std::uint64_t trials = 0;
        for (std::size_t j = 0; j < kShareInstances; ++j) {
            empirical = std::max(empirical, share[j]);
            trials += counted[j];
        }
        rows.push_back(make_bound_report("dssi_term2_share_balanced", kDelta, empirical, 0.05,
                                         trials, sbase.seed()));
    }
    return rows;
}

// ===== composite battery =====

std::vector<BoundReport> verify_propositions_battery(const DriverConfig& cfg, int threads) {
    const std::uint64_t seed = cfg.pipeline.seed;
    std::vector<BoundReport> rows;
    auto append = [&rows](std::vector<BoundReport> part) {
        for (BoundReport& r : part) rows.push_back(std::move(r));
    };
    append(prop2_battery(seed, threads));
    append(prop1_battery(seed, threads));
    append(lambda_star_battery(seed));
    append(prop3_battery(seed));
    append(alignment_drift_battery(seed, threads));
    append(output_bound_battery(seed, threads));
    if (cfg.verify.inject_violation) {
        rows.push_back(make_bound_report("injected_violation", 0.0, 1.0, 0.0, 0, seed));
    }
    return rows;
}

// ===== flow-sampler battery =====

std::vector<BoundReport> reflow_battery(std::uint64_t seed) {
    GaussianEndpoints ep;
    ep.mu0 = {-1.0, 0.0, 2.0};
    ep.var0 = {1.0, 0.5, 2.0};
    ep.mu1 = {1.0, 2.0, -1.0};
    ep.var1 = {2.0, 1.0, 0.5};
    const std::size_t d = ep.dim();

    const Rng base = Rng(seed).child(kReflowStream);
    std::vector<BoundReport> rows;

    // --- Euler marginals vs closed-form mean/variance (3 sigma) ---
    constexpr std::size_t kTrajectories = 10000;
    constexpr std::size_t kSteps = 100;
    const double checkpoints[] = {0.5, 1.0};
    const std::size_t indices[] = {kSteps / 2, kSteps};

    std::vector<KahanSum> sums(2 * d), sums_sq(2 * d);
    for (std::size_t i = 0; i < kTrajectories; ++i) {
        Rng r = base.child(i);
        const Trajectory traj = euler_sample(ep, kSteps, r);
        for (std::size_t c = 0; c < 2; ++c) {
            const std::vector<double>& x = traj.states[indices[c]];
            for (std::size_t k = 0; k < d; ++k) {
                sums[c * d + k].add(x[k]);
                sums_sq[c * d + k].add(x[k] * x[k]);
            }
        }
    }

    const double n = static_cast<double>(kTrajectories);
    for (std::size_t c = 0; c < 2; ++c) {
        const double t = checkpoints[c];
        double mean_excess = -std::numeric_limits<double>::infinity();
        double var_excess = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < d; ++k) {
            const double mean = sums[c * d + k].value() / n;
            const double var = std::max(
                0.0, (sums_sq[c * d + k].value() - n * mean * mean) / (n - 1.0));
            const double target_mean = (1.0 - t) * ep.mu0[k] + t * ep.mu1[k];
            const double target_var =
                (1.0 - t) * (1.0 - t) * ep.var0[k] + t * t * ep.var1[k];
            const double se_mean = std::sqrt(var / n);
            const double se_var = var * std::sqrt(2.0 / (n - 1.0));
            mean_excess =
                std::max(mean_excess, std::abs(mean - target_mean) - 3.0 * se_mean);
            var_excess = std::max(var_excess, std::abs(var - target_var) - 3.0 * se_var);
        }
        rows.push_back(make_bound_report("reflow_marginal_mean", t, mean_excess, 0.0,
                                         kTrajectories, base.seed()));
        rows.push_back(make_bound_report("reflow_marginal_var", t, var_excess, 0.0,
                                         kTrajectories, base.seed()));
    }

    // --- matching loss: conditional-expectation field vs perturbed fields ---
    {
        constexpr std::size_t kLossTrials = 20000;
        const Rng loss_rng = base.child(1000000);

        const VelocityField exact = [&ep](const std::vector<double>& x, double t) {
            return bridge_velocity(x, t, ep);
        };
        std::vector<VelocityField> candidates;
        for (double c : {0.5, -0.5}) {
            candidates.push_back([&ep, c](const std::vector<double>& x, double t) {
                std::vector<double> v = bridge_velocity(x, t, ep);
                for (double& e : v) e += c;
                return v;
            });
        }
        for (double s : {1.2, 0.8}) {
            candidates.push_back([&ep, s](const std::vector<double>& x, double t) {
                std::vector<double> v = bridge_velocity(x, t, ep);
                for (double& e : v) e *= s;
                return v;
            });
        }
        candidates.push_back([&ep](const std::vector<double>&, double) {
            std::vector<double> v(ep.dim());
            for (std::size_t k = 0; k < ep.dim(); ++k) v[k] = ep.mu1[k] - ep.mu0[k];
            return v;
        });

        // flow_loss only reads child streams of its rng, so handing every
        // candidate a copy of the same stream gives common random numbers.
        Rng exact_rng = loss_rng;
        const double exact_loss = flow_loss(ep, exact, kLossTrials, exact_rng);
        double worst = -std::numeric_limits<double>::infinity();
        for (const VelocityField& f : candidates) {
            Rng rng_copy = loss_rng;
            worst = std::max(worst, exact_loss - flow_loss(ep, f, kLossTrials, rng_copy));
        }
        rows.push_back(make_bound_report("reflow_loss_exact_vs_perturbed", 0.0, worst, 0.0,
                                         kLossTrials, loss_rng.seed()));
    }

    // --- first-order endpoint convergence ---
    {
        const std::size_t step_grid[] = {2, 4, 8, 16, 32, 64, 128, 256};
        constexpr std::size_t kTraj = 2000;
        std::vector<double> log_steps, log_errs;
        for (std::size_t s : step_grid) {
            KahanSum err_sum;
            for (std::size_t i = 0; i < kTraj; ++i) {
                Rng r = base.child(2000000 + i);  // same x0 for every step count
                const Trajectory traj = euler_sample(ep, s, r);
                const std::vector<double>& x0 = traj.states.front();
                const std::vector<double>& xe = traj.states.back();
                double sq = 0.0;
                for (std::size_t k = 0; k < d; ++k) {
                    const double exact_end =
                        ep.mu1[k] + std::sqrt(ep.var1[k] / ep.var0[k]) * (x0[k] - ep.mu0[k]);
                    const double diff = xe[k] - exact_end;
                    sq += diff * diff;
                }
                err_sum.add(std::sqrt(sq));
            }
            log_steps.push_back(std::log(static_cast<double>(s)));
            log_errs.push_back(std::log(err_sum.value() / static_cast<double>(kTraj)));
        }

        double mean_x = 0.0, mean_y = 0.0;
        for (std::size_t i = 0; i < log_steps.size(); ++i) {
            mean_x += log_steps[i];
            mean_y += log_errs[i];
        }
        mean_x /= static_cast<double>(log_steps.size());
        mean_y /= static_cast<double>(log_steps.size());
        double sxy = 0.0, sxx = 0.0;
        for (std::size_t i = 0; i < log_steps.size(); ++i) {
            sxy += (log_steps[i] - mean_x) * (log_errs[i] - mean_y);
            sxx += (log_steps[i] - mean_x) * (log_steps[i] - mean_x);
        }
        const double slope = sxy / sxx;
        rows.push_back(make_bound_report("reflow_euler_endpoint_slope", 0.0,
                                         std::abs(slope + 1.0), 0.2,
                                         static_cast<std::uint64_t>(kTraj) * 8, base.seed()));
    }
    return rows;
}

}  // namespace stylefuse
