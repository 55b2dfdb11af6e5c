#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "stylefuse/attention.hpp"

using namespace stylefuse;

namespace {

Matrix identity(std::size_t d) {
    Matrix m(d, d, 0.0);
    for (std::size_t i = 0; i < d; ++i) m(i, i) = 1.0;
    return m;
}

ProjectionWeights identity_weights(std::size_t d) {
    return ProjectionWeights{identity(d), identity(d), identity(d)};
}

TokenBlocks random_blocks(std::size_t d, std::size_t n_p, std::size_t n_s, std::size_t n_o,
                          Rng& rng) {
    TokenBlocks b;
    b.x_p = gaussian_matrix(n_p, d, 0.0, 1.0, rng);
    b.x_s = {gaussian_matrix(n_s, d, 0.0, 1.0, rng)};
    b.x_o = gaussian_matrix(n_o, d, 0.0, 1.0, rng);
    b.mask_o.assign(n_o, 0);
    return b;
}

// Adds `shift` to the logit columns [begin, end).
Matrix shift_columns(Matrix logits, std::size_t begin, std::size_t end, double shift) {
    for (std::size_t i = 0; i < logits.rows; ++i) {
        for (std::size_t j = begin; j < end; ++j) logits(i, j) += shift;
    }
    return logits;
}

}  // namespace

// ===== token block validation =====

TEST_CASE("token blocks: validation rejects structural mistakes") {
    Rng rng(1);
    TokenBlocks good = random_blocks(4, 2, 3, 5, rng);
    CHECK_NOTHROW(good.validate());
    CHECK(good.d() == 4);
    CHECK(good.n_p() == 2);
    CHECK(good.n_s() == 3);
    CHECK(good.n_o() == 5);

    TokenBlocks wrong_width = good;
    wrong_width.x_p = Matrix(2, 3, 0.1);
    CHECK_THROWS_AS(wrong_width.validate(), ShapeError);

    TokenBlocks empty_prompt = good;
    empty_prompt.x_p = Matrix(0, 4);
    CHECK_THROWS_AS(empty_prompt.validate(), ShapeError);

    TokenBlocks bad_mask = good;
    bad_mask.mask_o.assign(4, 0);
    CHECK_THROWS_AS(bad_mask.validate(), ShapeError);

    TokenBlocks non_finite = good;
    non_finite.x_o(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(non_finite.validate(), InvalidInputError);
}

TEST_CASE("token blocks: style groups accumulate into n_s") {
    Rng rng(2);
    TokenBlocks b = random_blocks(4, 2, 3, 5, rng);
    b.x_s.push_back(gaussian_matrix(2, 4, 0.0, 1.0, rng));
    CHECK(b.n_s() == 5);
    CHECK_NOTHROW(b.validate());
}

// ===== projections =====

TEST_CASE("project_qkv: identity weights copy tokens, masked V rows zeroed") {
    Rng rng(3);
    TokenBlocks b = random_blocks(4, 2, 3, 5, rng);
    b.mask_o[0] = 1;
    b.mask_o[3] = 1;

    const QkvBlocks qkv = project_qkv(b, identity_weights(4));
    CHECK(qkv.n_p() == 2);
    CHECK(qkv.n_s() == 3);
    CHECK(qkv.n_o() == 5);
    CHECK(qkv.d() == 4);

    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 4; ++j) CHECK(qkv.q_p(i, j) == b.x_p(i, j));
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) CHECK(qkv.v_s(i, j) == b.x_s[0](i, j));

    // Masked output rows keep queries and keys but lose their value rows.
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(qkv.v_o(0, j) == 0.0);
        CHECK(qkv.v_o(3, j) == 0.0);
        CHECK(qkv.q_o(0, j) == b.x_o(0, j));
        CHECK(qkv.k_o(0, j) == b.x_o(0, j));
        CHECK(qkv.v_o(1, j) == b.x_o(1, j));
    }
}

TEST_CASE("project_qkv: style groups concatenate in order") {
    Rng rng(4);
    TokenBlocks b = random_blocks(3, 1, 2, 2, rng);
    const Matrix extra = gaussian_matrix(2, 3, 0.0, 1.0, rng);
    b.x_s.push_back(extra);

    const QkvBlocks qkv = project_qkv(b, identity_weights(3));
    REQUIRE(qkv.n_s() == 4);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(qkv.k_s(0, j) == b.x_s[0](0, j));
        CHECK(qkv.k_s(2, j) == extra(0, j));
        CHECK(qkv.k_s(3, j) == extra(1, j));
    }
}

TEST_CASE("projection weights: wrong dimensions rejected") {
    ProjectionWeights w = identity_weights(4);
    CHECK_NOTHROW(w.validate(4));
    w.w_k = Matrix(3, 4, 0.0);
    CHECK_THROWS_AS(w.validate(4), ShapeError);
}

// ===== logits =====

TEST_CASE("output_logits: scaled dot products in block order") {
    // One token per block, d = 2, identity projections.
    TokenBlocks b;
    b.x_p = Matrix(1, 2);
    b.x_p(0, 0) = 1.0;
    b.x_s = {Matrix(1, 2)};
    b.x_s[0](0, 1) = 2.0;
    b.x_o = Matrix(1, 2, 0.5);
    b.mask_o = {0};

    const QkvBlocks qkv = project_qkv(b, identity_weights(2));
    const Matrix z = output_logits(qkv);
    REQUIRE(z.rows == 1);
    REQUIRE(z.cols == 3);
    const double inv = 1.0 / std::sqrt(2.0);
    CHECK(z(0, 0) == doctest::Approx(0.5 * inv).epsilon(1e-14));   // q_o . k_p
    CHECK(z(0, 1) == doctest::Approx(1.0 * inv).epsilon(1e-14));   // q_o . k_s
    CHECK(z(0, 2) == doctest::Approx(0.5 * inv).epsilon(1e-14));   // q_o . k_o
}

TEST_CASE("output_logits: scaling all keys scales the logits") {
    Rng rng(5);
    TokenBlocks b = random_blocks(6, 2, 3, 4, rng);
    QkvBlocks qkv = project_qkv(b, identity_weights(6));
    const Matrix z1 = output_logits(qkv);

    qkv.k_p = scale(qkv.k_p, 3.0);
    qkv.k_s = scale(qkv.k_s, 3.0);
    qkv.k_o = scale(qkv.k_o, 3.0);
    const Matrix z3 = output_logits(qkv);
    for (std::size_t i = 0; i < z1.size(); ++i) {
        CHECK(z3.data[i] == doctest::Approx(3.0 * z1.data[i]).epsilon(1e-12));
    }
}

// ===== block attention =====

TEST_CASE("block_attention_from_logits: hand softmax split") {
    Matrix z(1, 3, 0.0);
    z(0, 0) = 0.0;
    z(0, 1) = std::log(2.0);
    z(0, 2) = std::log(3.0);
    const BlockAttention attn = block_attention_from_logits(z, 1, 1, 1);
    CHECK(attn.alpha_p(0, 0) == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
    CHECK(attn.alpha_s(0, 0) == doctest::Approx(2.0 / 6.0).epsilon(1e-14));
    CHECK(attn.alpha_o(0, 0) == doctest::Approx(3.0 / 6.0).epsilon(1e-14));

    CHECK_THROWS_AS(block_attention_from_logits(z, 1, 1, 2), ShapeError);
}

TEST_CASE("block attention: joint row-stochastic across all blocks") {
    Rng rng(6);
    for (int rep = 0; rep < 50; ++rep) {
        Rng draw = rng.child(rep);
        const Matrix z = gaussian_matrix(7, 12, 0.0, 2.0, draw);
        const BlockAttention attn = block_attention_from_logits(z, 3, 4, 5);
        const BranchMasses masses = branch_masses(attn);
        for (std::size_t i = 0; i < 7; ++i) {
            const double total = masses.mass_p[i] + masses.mass_s[i] + masses.mass_o[i];
            CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(masses.mass_p[i] > 0.0);
        }
    }
}

TEST_CASE("block attention: zero logits give uniform weights") {
    const Matrix z(4, 10, 0.0);
    const BlockAttention attn = block_attention_from_logits(z, 2, 3, 5);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 2; ++j)
            CHECK(attn.alpha_p(i, j) == doctest::Approx(0.1).epsilon(1e-14));
        for (std::size_t j = 0; j < 5; ++j)
            CHECK(attn.alpha_o(i, j) == doctest::Approx(0.1).epsilon(1e-14));
    }
    const BranchMasses masses = branch_masses(attn);
    CHECK(masses.mass_p[0] == doctest::Approx(0.2).epsilon(1e-14));
    CHECK(masses.mass_s[0] == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(masses.mass_o[0] == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("block attention: a strongly shifted block wins the mass") {
    Rng rng(7);
    const Matrix base = gaussian_matrix(5, 9, 0.0, 1.0, rng);

    // +10 on the style columns concentrates nearly all mass there.
    const Matrix style_up = shift_columns(base, 3, 6, 10.0);
    const BlockAttention up = block_attention_from_logits(style_up, 3, 3, 3);
    const BranchMasses up_masses = branch_masses(up);
    for (std::size_t i = 0; i < 5; ++i) CHECK(up_masses.mass_s[i] > 0.99);

    // A huge negative shift suppresses the block entirely.
    const Matrix style_down = shift_columns(base, 3, 6, -1e9);
    const BlockAttention down = block_attention_from_logits(style_down, 3, 3, 3);
    const BranchMasses down_masses = branch_masses(down);
    for (std::size_t i = 0; i < 5; ++i) CHECK(down_masses.mass_s[i] < 1e-12);
}

TEST_CASE("block attention: style mass increases monotonically with its shift") {
    Rng rng(8);
    const Matrix base = gaussian_matrix(3, 9, 0.0, 1.0, rng);
    double previous = -1.0;
    for (double shift : {-2.0, -1.0, 0.0, 1.0, 2.0, 4.0}) {
        const BlockAttention attn =
            block_attention_from_logits(shift_columns(base, 3, 6, shift), 3, 3, 3);
        double total = 0.0;
        for (double m : branch_masses(attn).mass_s) total += m;
        CHECK(total > previous);
        previous = total;
    }
}

// ===== fused paths =====

TEST_CASE("identical tokens: every attention output row equals the shared value row") {
    TokenBlocks b;
    const std::size_t d = 3;
    Matrix row(1, d);
    row(0, 0) = 0.3;
    row(0, 1) = -0.2;
    row(0, 2) = 0.9;
    const auto stack_rows = [&](std::size_t n) {
        Matrix m(n, d);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) m(i, j) = row(0, j);
        return m;
    };
    b.x_p = stack_rows(2);
    b.x_s = {stack_rows(3)};
    b.x_o = stack_rows(4);
    b.mask_o.assign(4, 0);

    const QkvBlocks qkv = project_qkv(b, identity_weights(d));
    const FullAttention full = full_block_attention(qkv);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            CHECK(full.h_o(i, j) == doctest::Approx(row(0, j)).epsilon(1e-13));
            CHECK(full.h_p(0, j) == doctest::Approx(row(0, j)).epsilon(1e-13));
        }
    }
}

TEST_CASE("vanilla_output_attention: agrees with the full-attention output rows") {
    Rng rng(9);
    TokenBlocks b = random_blocks(8, 3, 4, 6, rng);
    b.mask_o[1] = 1;
    b.mask_o[4] = 1;
    Rng wrng(10);
    ProjectionWeights w;
    w.w_q = gaussian_matrix(8, 8, 0.0, 0.35, wrng);
    w.w_k = gaussian_matrix(8, 8, 0.0, 0.35, wrng);
    w.w_v = gaussian_matrix(8, 8, 0.0, 0.35, wrng);

    const QkvBlocks qkv = project_qkv(b, w);
    const FullAttention full = full_block_attention(qkv);
    const VanillaOutput vanilla = vanilla_output_attention(qkv);
    REQUIRE(full.h_o.same_shape(vanilla.h_o));
    for (std::size_t i = 0; i < full.h_o.size(); ++i) {
        CHECK(std::abs(full.h_o.data[i] - vanilla.h_o.data[i]) < 1e-12);
    }

    // The attention in the report is the split softmax of the same logits.
    const Matrix z = output_logits(qkv);
    for (std::size_t i = 0; i < z.size(); ++i) {
        CHECK(vanilla.attn.logits.data[i] == doctest::Approx(z.data[i]).epsilon(1e-14));
    }
    const Matrix refused = fuse_vanilla(vanilla.attn, qkv);
    for (std::size_t i = 0; i < refused.size(); ++i) {
        CHECK(refused.data[i] == vanilla.h_o.data[i]);
    }
}

TEST_CASE("style token permutation: alpha columns permute, fused output unchanged") {
    Rng rng(11);
    TokenBlocks b = random_blocks(5, 2, 4, 3, rng);
    const QkvBlocks qkv = project_qkv(b, identity_weights(5));
    const VanillaOutput before = vanilla_output_attention(qkv);

    // Reverse the style token rows.
    TokenBlocks permuted = b;
    Matrix& s = permuted.x_s[0];
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 5; ++j) std::swap(s(i, j), s(3 - i, j));
    }
    const QkvBlocks qkv_perm = project_qkv(permuted, identity_weights(5));
    const VanillaOutput after = vanilla_output_attention(qkv_perm);

    for (std::size_t i = 0; i < before.h_o.size(); ++i) {
        CHECK(std::abs(before.h_o.data[i] - after.h_o.data[i]) < 1e-12);
    }
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(before.attn.alpha_s(i, j) ==
                  doctest::Approx(after.attn.alpha_s(i, 3 - j)).epsilon(1e-12));
        }
    }
}

TEST_CASE("masked rows: values silenced but queries still attend") {
    Rng rng(12);
    TokenBlocks b = random_blocks(4, 2, 2, 3, rng);
    b.mask_o.assign(3, 1);  // everything masked
    const QkvBlocks qkv = project_qkv(b, identity_weights(4));
    const VanillaOutput out = vanilla_output_attention(qkv);

    // Output branch contributes nothing; prompt and style still do.
    const Matrix prompt_style =
        add(matmul(out.attn.alpha_p, qkv.v_p), matmul(out.attn.alpha_s, qkv.v_s));
    for (std::size_t i = 0; i < out.h_o.size(); ++i) {
        CHECK(out.h_o.data[i] == doctest::Approx(prompt_style.data[i]).epsilon(1e-13));
    }

    // Attention rows remain stochastic even though all V_o rows are zero.
    const BranchMasses masses = branch_masses(out.attn);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(masses.mass_p[i] + masses.mass_s[i] + masses.mass_o[i] ==
              doctest::Approx(1.0).epsilon(1e-12));
        CHECK(masses.mass_o[i] > 0.0);
    }
}
