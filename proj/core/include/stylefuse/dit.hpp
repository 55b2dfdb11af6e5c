#pragma once

#include "stylefuse/dssi.hpp"

namespace stylefuse {

// One toy transformer block: shared-projection block attention with a
// residual, then a two-layer ReLU MLP (hidden width 4d) with a residual.
// No positional encodings and no normalization layers; the harness works at
// a scale where they are unnecessary.
struct DitBlockWeights {
    ProjectionWeights proj;
    Matrix w_mlp1;  // d x 4d
    Matrix w_mlp2;  // 4d x d

    void validate(std::size_t d) const;
};

// Everything the experiment harness wants to compare between two runs of
// the same block: scaled output-query logits, the full-axis attention
// split, the fused output rows, the measured alignment strengths, and the
// Frobenius weight of each conditioning branch in the fused output.
struct LayerTrace {
    Matrix logits;
    BlockAttention attn;
    Matrix h_o;
    AlignmentStrengths strengths;
    double prompt_contribution = 0.0;
    double style_contribution = 0.0;
};

// Forward pass. The prompt and style query rows always take the plain
// full-axis attention path; only the output rows go through the fusion
// selected by cfg.mode. mask_o is carried through unchanged. Multiple style
// groups are merged into one on output.
TokenBlocks dit_block_forward(const TokenBlocks& blocks, const DitBlockWeights& weights,
                              const DssiConfig& cfg, LayerTrace* trace = nullptr);

// Gaussian weights with entries N(0, 1/d), drawn deterministically from rng.
DitBlockWeights make_dit_weights(std::size_t d, Rng& rng);
std::vector<DitBlockWeights> make_stack_weights(std::size_t layers, std::size_t d, Rng& rng);

// Flat JSON round-trip: {"d": ..., "seed": ..., "blocks": [{"w_q": [...],
// "w_k": [...], "w_v": [...], "w_mlp1": [...], "w_mlp2": [...]}, ...]} with
// row-major entry arrays, so a run's weights can be stored and replayed.
std::string weights_to_json(const std::vector<DitBlockWeights>& blocks, std::size_t d,
                            std::uint64_t seed);
std::vector<DitBlockWeights> weights_from_json(const std::string& text, std::size_t& d_out,
                                               std::uint64_t& seed_out);

}  // namespace stylefuse
