#pragma once

#include "stylefuse/dit.hpp"
#include "stylefuse/reflow.hpp"

namespace stylefuse {

// Token-scale experiment configuration. Mirrors the driver's JSON schema
// (field names there: d, N_p, N_s, N_o, layers, sample_steps, seed,
// mask_fractions, kappas, dssi{...}).
struct PipelineConfig {
    std::size_t d = 64;
    std::size_t n_p = 8;
    std::size_t n_s = 32;
    std::size_t n_o = 64;
    std::size_t layers = 4;
    std::size_t sample_steps = 1;
    std::uint64_t seed = 1;
    std::vector<double> mask_fractions = {0.25, 0.5, 0.75, 0.99};
    std::vector<double> kappas = {1.0, 1.5, 2.0, 2.3, 2.5, 3.0};
    DssiConfig dssi;

    // Which layers apply the configured fusion mode; empty means every
    // layer. Layers switched off fall back to the unfused output path.
    std::vector<std::uint8_t> dssi_layer_mask;

    // When sample_steps > 1, optionally advance the output block by one
    // forward-Euler step of the standard-normal bridge between stack
    // applications (an inference-time loop analog; off by default).
    bool reflow_time_loop = false;

    void validate() const;
};

// Number of leading output rows hidden at a given fraction:
// ceil(mask_fraction * n_o), clamped to n_o.
std::size_t masked_row_count(double mask_fraction, std::size_t n_o);

// Assembles [prompt; style; output] token blocks for one inpainting run.
// reference_tokens (n_o x d) is the clean target; its first
// masked_row_count(...) rows are zeroed in x_o and flagged in mask_o.
// style_tokens (n_s x d) ride along unmasked. Prompt tokens are drawn from
// a stream derived from cfg.seed, so the same config always builds the same
// prompt.
TokenBlocks build_incontext_input(const Matrix& reference_tokens, const Matrix& style_tokens,
                                  const PipelineConfig& cfg, double mask_fraction);

struct StackResult {
    TokenBlocks output;
    std::vector<LayerTrace> trace;  // one entry per executed layer (x steps)
};

// Applies the configured transformer stack sample_steps times, recording a
// LayerTrace per layer application. weights.size() must equal cfg.layers.
StackResult run_stack(const TokenBlocks& blocks, const std::vector<DitBlockWeights>& weights,
                      const PipelineConfig& cfg);

// ===== experiment reports =====

struct MaskCell {
    FusionMode mode = FusionMode::vanilla;
    double mask_fraction = 0.0;
    double kappa = 0.0;
    // Layer-averaged mean absolute differences against the clean
    // (fraction 0) run of the same mode.
    double mae_logits = 0.0;
    double mae_alpha = 0.0;
    double mae_output = 0.0;
    std::vector<double> per_layer_logits;
    std::vector<double> per_layer_alpha;
    std::vector<double> per_layer_output;
};

struct KappaCell {
    double kappa = 0.0;
    FusionMode mode = FusionMode::vanilla;
    double style_contribution = 0.0;   // layer-averaged branch weight
    double prompt_contribution = 0.0;
    double lambda_star_mean = 0.0;
};

struct ExperimentReport {
    std::string experiment;
    std::uint64_t seed = 0;
    std::vector<MaskCell> mask_cells;
    std::vector<KappaCell> kappa_cells;
    std::string config_echo_json;  // filled by the driver
};

// Masked-input noise propagation: for each mask fraction and each of
// {vanilla, dssi}, runs clean and masked inputs through the identical
// stack and reports the MAE of logits, attention, and fused output.
ExperimentReport mask_noise_experiment(const PipelineConfig& cfg, int threads = 1);

// Same grid across all three fusion modes.
ExperimentReport mode_ablation(const PipelineConfig& cfg, int threads = 1);

// Fully-masked generation runs, one per kappa, reporting the effective
// Frobenius weight of the style and prompt branches in the fused output.
ExperimentReport kappa_sweep(const PipelineConfig& cfg, const std::vector<double>& kappas,
                             int threads = 1);

// Concatenates several style groups into the single style slot; all groups
// must share one width.
Matrix multi_style_concat(const std::vector<Matrix>& styles);

// Deterministic token/weight construction shared by the experiments (all
// derived from cfg.seed).
Matrix make_reference_tokens(const PipelineConfig& cfg);
Matrix make_style_tokens(const PipelineConfig& cfg);
std::vector<DitBlockWeights> make_pipeline_weights(const PipelineConfig& cfg);

}  // namespace stylefuse
