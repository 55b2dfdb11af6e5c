#pragma once

#include <cstdint>
#include <vector>

#include "stylefuse/linalg.hpp"

namespace stylefuse {

// ===== token layout =====
//
// The working sequence is the concatenation [x_p; x_s; x_o]:
//   x_p  prompt (condition) tokens
//   x_s  style reference tokens (possibly several groups, concatenated)
//   x_o  output tokens being synthesized
// mask_o flags which output rows are hidden (value rows zeroed); attention
// itself stays dense over all tokens.

struct TokenBlocks {
    Matrix x_p;
    std::vector<Matrix> x_s;      // one or more style groups, same width d
    Matrix x_o;
    std::vector<std::uint8_t> mask_o;  // size n_o(); 1 = masked row

    std::size_t d() const { return x_o.cols; }
    std::size_t n_p() const { return x_p.rows; }
    std::size_t n_o() const { return x_o.rows; }
    std::size_t n_s() const {
        std::size_t n = 0;
        for (const Matrix& s : x_s) n += s.rows;
        return n;
    }

    // Throws ShapeError / InvalidInputError if widths disagree, any block is
    // empty, mask size is wrong, or entries are non-finite.
    void validate() const;
};

// Shared projection weights applied to every block (d x d each).
struct ProjectionWeights {
    Matrix w_q;
    Matrix w_k;
    Matrix w_v;

    void validate(std::size_t d) const;
};

// Per-block projections. All style groups are concatenated into the single
// s slot; masked output rows have their V rows zeroed (queries/keys stay).
struct QkvBlocks {
    Matrix q_p, q_s, q_o;
    Matrix k_p, k_s, k_o;
    Matrix v_p, v_s, v_o;

    std::size_t d() const { return q_o.cols; }
    std::size_t n_p() const { return k_p.rows; }
    std::size_t n_s() const { return k_s.rows; }
    std::size_t n_o() const { return k_o.rows; }
};

// Output-query attention, split by key block. alpha_* are slices of one
// softmax taken over the full concatenated key axis, so
// alpha_p + alpha_s + alpha_o is row-stochastic jointly, not per block.
struct BlockAttention {
    Matrix logits;   // n_o x (n_p + n_s + n_o), scaled by 1/sqrt(d)
    Matrix alpha_p;  // n_o x n_p
    Matrix alpha_s;  // n_o x n_s
    Matrix alpha_o;  // n_o x n_o

    std::size_t n_p() const { return alpha_p.cols; }
    std::size_t n_s() const { return alpha_s.cols; }
    std::size_t n_o() const { return alpha_o.cols; }
};

// ===== operations =====

QkvBlocks project_qkv(const TokenBlocks& blocks, const ProjectionWeights& weights);

// Scaled output-query logits [Q_o K_p^T | Q_o K_s^T | Q_o K_o^T] / sqrt(d).
Matrix output_logits(const QkvBlocks& qkv);

// Softmax of arbitrary output-row logits over the full key axis, split into
// the three blocks. Column counts must equal n_p/n_s/n_o of `qkv` layout.
BlockAttention block_attention_from_logits(const Matrix& logits, std::size_t n_p,
                                           std::size_t n_s, std::size_t n_o);

// Attention rows for every query block over the full key axis:
// H = softmax([Q_p; Q_s; Q_o] K^T / sqrt(d)) V, split back per query block.
struct FullAttention {
    Matrix h_p;
    Matrix h_s;
    Matrix h_o;
};

FullAttention full_block_attention(const QkvBlocks& qkv);

// Unfused output-block path: h_o = alpha_p V_p + alpha_s V_s + alpha_o V_o
// with alphas from the full-axis softmax. Agrees with the h_o rows of
// full_block_attention.
struct VanillaOutput {
    Matrix h_o;
    BlockAttention attn;
};

VanillaOutput vanilla_output_attention(const QkvBlocks& qkv);

// h_o = alpha_p V_p + alpha_s V_s + alpha_o V_o for given attention weights.
Matrix fuse_vanilla(const BlockAttention& attn, const QkvBlocks& qkv);

// Per output row i: l1 mass each block received, mass_p[i] + mass_s[i] +
// mass_o[i] = 1.
struct BranchMasses {
    std::vector<double> mass_p;
    std::vector<double> mass_s;
    std::vector<double> mass_o;
};

BranchMasses branch_masses(const BlockAttention& attn);

}  // namespace stylefuse
