#include "stylefuse/attention.hpp"

#include <cmath>

namespace stylefuse {

void TokenBlocks::validate() const {
    const std::size_t width = d();
    if (width == 0) throw ShapeError("TokenBlocks: zero width");
    if (x_p.rows == 0) throw ShapeError("TokenBlocks: prompt block is empty");
    if (x_o.rows == 0) throw ShapeError("TokenBlocks: output block is empty");
    if (x_s.empty() || n_s() == 0) throw ShapeError("TokenBlocks: style block is empty");
    if (x_p.cols != width) throw ShapeError("TokenBlocks: prompt width differs from output width");
    for (const Matrix& s : x_s) {
        if (s.cols != width) throw ShapeError("TokenBlocks: style width differs from output width");
    }
    if (mask_o.size() != x_o.rows) {
        throw ShapeError("TokenBlocks: mask_o size " + std::to_string(mask_o.size()) +
                         " != output rows " + std::to_string(x_o.rows));
    }
    check_finite(x_p, "TokenBlocks.x_p");
    for (const Matrix& s : x_s) check_finite(s, "TokenBlocks.x_s");
    check_finite(x_o, "TokenBlocks.x_o");
}

void ProjectionWeights::validate(std::size_t d) const {
    auto check = [d](const Matrix& w, const char* name) {
        if (w.rows != d || w.cols != d) {
            throw ShapeError(std::string("ProjectionWeights.") + name + ": expected " +
                             std::to_string(d) + "x" + std::to_string(d) + ", got " +
                             std::to_string(w.rows) + "x" + std::to_string(w.cols));
        }
        check_finite(w, std::string("ProjectionWeights.") + name);
    };
    check(w_q, "w_q");
    check(w_k, "w_k");
    check(w_v, "w_v");
}

QkvBlocks project_qkv(const TokenBlocks& blocks, const ProjectionWeights& weights) {
    blocks.validate();
    weights.validate(blocks.d());

    const Matrix x_s = blocks.x_s.size() == 1 ? blocks.x_s.front() : vstack(blocks.x_s);

    QkvBlocks out;
    out.q_p = matmul(blocks.x_p, weights.w_q);
    out.q_s = matmul(x_s, weights.w_q);
    out.q_o = matmul(blocks.x_o, weights.w_q);
    out.k_p = matmul(blocks.x_p, weights.w_k);
    out.k_s = matmul(x_s, weights.w_k);
    out.k_o = matmul(blocks.x_o, weights.w_k);
    out.v_p = matmul(blocks.x_p, weights.w_v);
    out.v_s = matmul(x_s, weights.w_v);
    out.v_o = matmul(blocks.x_o, weights.w_v);

    // Hidden output rows contribute no value; they still emit queries and
    // keys so the attention pattern stays dense.
    for (std::size_t i = 0; i < blocks.mask_o.size(); ++i) {
        if (blocks.mask_o[i]) {
            double* row = out.v_o.row(i);
            for (std::size_t j = 0; j < out.v_o.cols; ++j) row[j] = 0.0;
        }
    }
    return out;
}

Matrix output_logits(const QkvBlocks& qkv) {
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(qkv.d()));
    const Matrix keys = vstack({qkv.k_p, qkv.k_s, qkv.k_o});
    return scale(matmul_bt(qkv.q_o, keys), inv_sqrt_d);
}

BlockAttention block_attention_from_logits(const Matrix& logits, std::size_t n_p,
                                           std::size_t n_s, std::size_t n_o) {
    if (logits.cols != n_p + n_s + n_o) {
        throw ShapeError("block_attention_from_logits: logit columns " +
                         std::to_string(logits.cols) + " != n_p+n_s+n_o = " +
                         std::to_string(n_p + n_s + n_o));
    }
    BlockAttention attn;
    attn.logits = logits;
    const Matrix alpha = row_softmax(logits);
    attn.alpha_p = slice_cols(alpha, 0, n_p);
    attn.alpha_s = slice_cols(alpha, n_p, n_p + n_s);
    attn.alpha_o = slice_cols(alpha, n_p + n_s, n_p + n_s + n_o);
    return attn;
}

FullAttention full_block_attention(const QkvBlocks& qkv) {
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(qkv.d()));
    const Matrix queries = vstack({qkv.q_p, qkv.q_s, qkv.q_o});
    const Matrix keys = vstack({qkv.k_p, qkv.k_s, qkv.k_o});
    const Matrix values = vstack({qkv.v_p, qkv.v_s, qkv.v_o});
    const Matrix alpha = row_softmax(scale(matmul_bt(queries, keys), inv_sqrt_d));
    const Matrix h = matmul(alpha, values);

    FullAttention out;
    out.h_p = slice_rows(h, 0, qkv.n_p());
    out.h_s = slice_rows(h, qkv.n_p(), qkv.n_p() + qkv.n_s());
    out.h_o = slice_rows(h, qkv.n_p() + qkv.n_s(), h.rows);
    return out;
}

Matrix fuse_vanilla(const BlockAttention& attn, const QkvBlocks& qkv) {
    Matrix h = matmul(attn.alpha_p, qkv.v_p);
    h = add(h, matmul(attn.alpha_s, qkv.v_s));
    h = add(h, matmul(attn.alpha_o, qkv.v_o));
    return h;
}

VanillaOutput vanilla_output_attention(const QkvBlocks& qkv) {
    VanillaOutput out;
    out.attn = block_attention_from_logits(output_logits(qkv), qkv.n_p(), qkv.n_s(), qkv.n_o());
    out.h_o = fuse_vanilla(out.attn, qkv);
    return out;
}

BranchMasses branch_masses(const BlockAttention& attn) {
    BranchMasses out;
    const std::size_t rows = attn.alpha_p.rows;
    out.mass_p.resize(rows);
    out.mass_s.resize(rows);
    out.mass_o.resize(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        out.mass_p[i] = row_l1(attn.alpha_p, i);
        out.mass_s[i] = row_l1(attn.alpha_s, i);
        out.mass_o[i] = row_l1(attn.alpha_o, i);
    }
    return out;
}

}  // namespace stylefuse
