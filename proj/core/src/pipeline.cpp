#include "stylefuse/pipeline.hpp"

#include <algorithm>
#include <cmath>

namespace stylefuse {

namespace {

// Fixed child-stream indices of cfg.seed, so every experiment cell can
// rebuild identical tokens and weights independently.
constexpr std::uint64_t kReferenceStream = 1;
constexpr std::uint64_t kStyleStream = 2;
constexpr std::uint64_t kPromptStream = 3;
constexpr std::uint64_t kWeightStream = 4;

// Token scale: sets the softmax temperature of the first layer (logits grow
// with the squared token norm); kept below 1 so the stack stays in the
// smooth-attention regime where masking noise propagates monotonically.
constexpr double kTokenScale = 0.4;

}  // namespace

void PipelineConfig::validate() const {
    if (d == 0 || n_p == 0 || n_s == 0 || n_o == 0) {
        throw InvalidInputError("PipelineConfig: d, N_p, N_s, N_o must all be >= 1");
    }
    if (sample_steps == 0) {
        throw InvalidInputError("PipelineConfig: sample_steps must be >= 1");
    }
    double previous = -1.0;
    for (double f : mask_fractions) {
        if (!std::isfinite(f) || f < 0.0 || f > 1.0) {
            throw InvalidInputError("PipelineConfig: mask fractions must lie in [0, 1]");
        }
        if (f < previous) {
            throw InvalidInputError("PipelineConfig: mask fractions must be sorted ascending");
        }
        previous = f;
    }
    for (double k : kappas) {
        if (!std::isfinite(k) || k <= 0.0) {
            throw InvalidInputError("PipelineConfig: kappas must be positive");
        }
    }
    if (!dssi_layer_mask.empty() && dssi_layer_mask.size() != layers) {
        throw InvalidInputError("PipelineConfig: dssi_layer_mask must have one flag per layer");
    }
    dssi.validate();
}

std::size_t masked_row_count(double mask_fraction, std::size_t n_o) {
    if (!std::isfinite(mask_fraction) || mask_fraction < 0.0 || mask_fraction > 1.0) {
        throw InvalidInputError("masked_row_count: mask_fraction must lie in [0, 1]");
    }
    const double raw = std::ceil(mask_fraction * static_cast<double>(n_o));
    return std::min(n_o, static_cast<std::size_t>(raw));
}

TokenBlocks build_incontext_input(const Matrix& reference_tokens, const Matrix& style_tokens,
                                  const PipelineConfig& cfg, double mask_fraction) {
    cfg.validate();
    if (reference_tokens.rows != cfg.n_o || reference_tokens.cols != cfg.d) {
        throw ShapeError("build_incontext_input: reference tokens must be N_o x d");
    }
    if (style_tokens.rows != cfg.n_s || style_tokens.cols != cfg.d) {
        throw ShapeError("build_incontext_input: style tokens must be N_s x d");
    }
    check_finite(reference_tokens, "build_incontext_input.reference");
    check_finite(style_tokens, "build_incontext_input.style");

    TokenBlocks blocks;
    Rng prompt_rng = Rng(cfg.seed).child(kPromptStream);
    blocks.x_p = gaussian_matrix(cfg.n_p, cfg.d, 0.0, kTokenScale, prompt_rng);
    blocks.x_s = {style_tokens};
    blocks.x_o = reference_tokens;
    blocks.mask_o.assign(cfg.n_o, 0);

    const std::size_t hidden = masked_row_count(mask_fraction, cfg.n_o);
    for (std::size_t i = 0; i < hidden; ++i) {
        blocks.mask_o[i] = 1;
        double* row = blocks.x_o.row(i);
        for (std::size_t j = 0; j < cfg.d; ++j) row[j] = 0.0;
    }
    return blocks;
}

StackResult run_stack(const TokenBlocks& blocks, const std::vector<DitBlockWeights>& weights,
                      const PipelineConfig& cfg) {
    cfg.validate();
    blocks.validate();
    if (weights.size() != cfg.layers) {
        throw ShapeError("run_stack: weight count " + std::to_string(weights.size()) +
                         " != layers " + std::to_string(cfg.layers));
    }

    StackResult result;
    result.output = blocks;
    result.trace.reserve(cfg.layers * cfg.sample_steps);

    // Standard-normal bridge used by the optional inference-time loop.
    GaussianEndpoints unit_bridge;
    unit_bridge.mu0.assign(cfg.d, 0.0);
    unit_bridge.mu1.assign(cfg.d, 0.0);
    unit_bridge.var0.assign(cfg.d, 1.0);
    unit_bridge.var1.assign(cfg.d, 1.0);

    for (std::size_t step = 0; step < cfg.sample_steps; ++step) {
        for (std::size_t layer = 0; layer < cfg.layers; ++layer) {
            DssiConfig layer_cfg = cfg.dssi;
            if (!cfg.dssi_layer_mask.empty() && !cfg.dssi_layer_mask[layer]) {
                layer_cfg.mode = FusionMode::vanilla;
            }
            LayerTrace trace;
            result.output = dit_block_forward(result.output, weights[layer], layer_cfg, &trace);
            result.trace.push_back(std::move(trace));
        }
        if (cfg.reflow_time_loop && step + 1 < cfg.sample_steps) {
            const double t = static_cast<double>(step + 1) / static_cast<double>(cfg.sample_steps);
            const double dt = 1.0 / static_cast<double>(cfg.sample_steps);
            Matrix& x_o = result.output.x_o;
            std::vector<double> row(cfg.d);
            for (std::size_t i = 0; i < x_o.rows; ++i) {
                std::copy(x_o.row(i), x_o.row(i) + cfg.d, row.begin());
                const std::vector<double> v = bridge_velocity(row, t, unit_bridge);
                for (std::size_t j = 0; j < cfg.d; ++j) x_o(i, j) += dt * v[j];
            }
        }
    }
    return result;
}

namespace {

double attention_abs_diff_sum(const Matrix& a, const Matrix& b, std::size_t& count) {
    KahanSum acc;
    for (std::size_t i = 0; i < a.size(); ++i) acc.add(std::abs(a.data[i] - b.data[i]));
    count += a.size();
    return acc.value();
}

// MAE across the three attention blocks jointly (all entries weighted
// equally).
double mae_attention(const BlockAttention& a, const BlockAttention& b) {
    std::size_t count = 0;
    double total = attention_abs_diff_sum(a.alpha_p, b.alpha_p, count);
    total += attention_abs_diff_sum(a.alpha_s, b.alpha_s, count);
    total += attention_abs_diff_sum(a.alpha_o, b.alpha_o, count);
    return count == 0 ? 0.0 : total / static_cast<double>(count);
}

double mean_of(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    KahanSum acc;
    for (double v : values) acc.add(v);
    return acc.value() / static_cast<double>(values.size());
}

MaskCell compare_runs(const StackResult& clean, const StackResult& noisy, FusionMode mode,
                      double fraction, double kappa) {
    MaskCell cell;
    cell.mode = mode;
    cell.mask_fraction = fraction;
    cell.kappa = kappa;
    for (std::size_t i = 0; i < clean.trace.size(); ++i) {
        cell.per_layer_logits.push_back(
            mean_abs_diff(noisy.trace[i].logits, clean.trace[i].logits));
        cell.per_layer_alpha.push_back(mae_attention(noisy.trace[i].attn, clean.trace[i].attn));
        cell.per_layer_output.push_back(mean_abs_diff(noisy.trace[i].h_o, clean.trace[i].h_o));
    }
    cell.mae_logits = mean_of(cell.per_layer_logits);
    cell.mae_alpha = mean_of(cell.per_layer_alpha);
    cell.mae_output = mean_of(cell.per_layer_output);
    return cell;
}

// One experiment cell: clean and masked runs of the same mode with
// identical tokens and weights, everything rebuilt from cfg.seed so cells
// are order-independent.
MaskCell run_mask_cell(const PipelineConfig& cfg, FusionMode mode, double fraction) {
    PipelineConfig cell_cfg = cfg;
    cell_cfg.dssi.mode = mode;
    const Matrix reference = make_reference_tokens(cfg);
    const Matrix style = make_style_tokens(cfg);
    const std::vector<DitBlockWeights> weights = make_pipeline_weights(cfg);
    const StackResult clean =
        run_stack(build_incontext_input(reference, style, cell_cfg, 0.0), weights, cell_cfg);
    const StackResult noisy =
        run_stack(build_incontext_input(reference, style, cell_cfg, fraction), weights, cell_cfg);
    return compare_runs(clean, noisy, mode, fraction, cell_cfg.dssi.kappa);
}

ExperimentReport mask_grid(const PipelineConfig& cfg, const std::vector<FusionMode>& modes,
                           const std::string& name, int threads) {
    cfg.validate();
    ExperimentReport report;
    report.experiment = name;
    report.seed = cfg.seed;
    const std::size_t cells = modes.size() * cfg.mask_fractions.size();
    report.mask_cells.resize(cells);
    parallel_for_index(cells, threads, [&](std::size_t idx) {
        const FusionMode mode = modes[idx / cfg.mask_fractions.size()];
        const double fraction = cfg.mask_fractions[idx % cfg.mask_fractions.size()];
        report.mask_cells[idx] = run_mask_cell(cfg, mode, fraction);
    });
    return report;
}

}  // namespace

Matrix make_reference_tokens(const PipelineConfig& cfg) {
    Rng rng = Rng(cfg.seed).child(kReferenceStream);
    return gaussian_matrix(cfg.n_o, cfg.d, 0.0, kTokenScale, rng);
}

Matrix make_style_tokens(const PipelineConfig& cfg) {
    Rng rng = Rng(cfg.seed).child(kStyleStream);
    return gaussian_matrix(cfg.n_s, cfg.d, 0.0, kTokenScale, rng);
}

std::vector<DitBlockWeights> make_pipeline_weights(const PipelineConfig& cfg) {
    Rng rng = Rng(cfg.seed).child(kWeightStream);
    return make_stack_weights(cfg.layers, cfg.d, rng);
}

ExperimentReport mask_noise_experiment(const PipelineConfig& cfg, int threads) {
    return mask_grid(cfg, {FusionMode::vanilla, FusionMode::dssi}, "mask_noise", threads);
}

ExperimentReport mode_ablation(const PipelineConfig& cfg, int threads) {
    return mask_grid(cfg, {FusionMode::vanilla, FusionMode::fssi, FusionMode::dssi},
                     "mode_ablation", threads);
}

ExperimentReport kappa_sweep(const PipelineConfig& cfg, const std::vector<double>& kappas,
                             int threads) {
    cfg.validate();
    if (kappas.empty()) throw InvalidInputError("kappa_sweep: kappas must be non-empty");
    for (double k : kappas) {
        if (!std::isfinite(k) || k <= 0.0) {
            throw InvalidInputError("kappa_sweep: kappas must be positive");
        }
    }

    ExperimentReport report;
    report.experiment = "kappa_sweep";
    report.seed = cfg.seed;
    report.kappa_cells.resize(kappas.size());
    parallel_for_index(kappas.size(), threads, [&](std::size_t idx) {
        PipelineConfig sweep_cfg = cfg;
        sweep_cfg.dssi.kappa = kappas[idx];
        const Matrix reference = make_reference_tokens(cfg);
        const Matrix style = make_style_tokens(cfg);
        const std::vector<DitBlockWeights> weights = make_pipeline_weights(cfg);
        // Fully-masked output block: the generation analog.
        const StackResult run =
            run_stack(build_incontext_input(reference, style, sweep_cfg, 1.0), weights, sweep_cfg);

        KappaCell cell;
        cell.kappa = kappas[idx];
        cell.mode = sweep_cfg.dssi.mode;
        std::vector<double> style_w, prompt_w, lambda_values;
        for (const LayerTrace& trace : run.trace) {
            style_w.push_back(trace.style_contribution);
            prompt_w.push_back(trace.prompt_contribution);
            lambda_values.push_back(trace.strengths.lambda_star);
        }
        cell.style_contribution = mean_of(style_w);
        cell.prompt_contribution = mean_of(prompt_w);
        cell.lambda_star_mean = mean_of(lambda_values);
        report.kappa_cells[idx] = cell;
    });
    return report;
}

Matrix multi_style_concat(const std::vector<Matrix>& styles) {
    if (styles.empty()) throw ShapeError("multi_style_concat: no style groups given");
    for (const Matrix& s : styles) {
        if (s.rows == 0) throw ShapeError("multi_style_concat: empty style group");
        check_finite(s, "multi_style_concat");
    }
    return vstack(styles);
}

}  // namespace stylefuse
