#include "stylefuse/dit.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace stylefuse {

void DitBlockWeights::validate(std::size_t d) const {
    proj.validate(d);
    if (w_mlp1.rows != d || w_mlp1.cols != 4 * d) {
        throw ShapeError("DitBlockWeights.w_mlp1: expected " + std::to_string(d) + "x" +
                         std::to_string(4 * d));
    }
    if (w_mlp2.rows != 4 * d || w_mlp2.cols != d) {
        throw ShapeError("DitBlockWeights.w_mlp2: expected " + std::to_string(4 * d) + "x" +
                         std::to_string(d));
    }
    check_finite(w_mlp1, "DitBlockWeights.w_mlp1");
    check_finite(w_mlp2, "DitBlockWeights.w_mlp2");
}

namespace {

Matrix mlp_residual(const Matrix& x, const DitBlockWeights& w) {
    return add(x, matmul(relu(matmul(x, w.w_mlp1)), w.w_mlp2));
}

double branch_weight(const Matrix& alpha, const Matrix& v, double coefficient) {
    return coefficient * frobenius_norm(matmul(alpha, v));
}

}  // namespace

TokenBlocks dit_block_forward(const TokenBlocks& blocks, const DitBlockWeights& weights,
                              const DssiConfig& cfg, LayerTrace* trace) {
    cfg.validate();
    weights.validate(blocks.d());
    const QkvBlocks qkv = project_qkv(blocks, weights.proj);

    const FullAttention full = full_block_attention(qkv);
    const BlockAttention attn =
        block_attention_from_logits(output_logits(qkv), qkv.n_p(), qkv.n_s(), qkv.n_o());
    const AlignmentStrengths strengths = alignment_strengths(attn, cfg);
    const Matrix h_o = fused_output(qkv, attn, cfg);

    if (trace) {
        trace->logits = attn.logits;
        trace->attn = attn;
        trace->h_o = h_o;
        trace->strengths = strengths;
        // Effective coefficient each conditioning branch carries in the
        // fused output under the active mode.
        double pw = 1.0;
        double sw = 1.0;
        if (cfg.mode == FusionMode::dssi) {
            pw = cfg.kappa * (1.0 - strengths.lambda_star);
            sw = cfg.kappa * strengths.lambda_star;
        } else if (cfg.mode == FusionMode::fssi) {
            pw = cfg.kappa * cfg.fixed_lambda;
            sw = cfg.kappa * (1.0 - cfg.fixed_lambda);
        }
        trace->prompt_contribution = branch_weight(attn.alpha_p, qkv.v_p, pw);
        trace->style_contribution = branch_weight(attn.alpha_s, qkv.v_s, sw);
    }

    TokenBlocks out;
    const Matrix x_s =
        blocks.x_s.size() == 1 ? blocks.x_s.front() : vstack(blocks.x_s);
    out.x_p = mlp_residual(add(blocks.x_p, full.h_p), weights);
    out.x_s = {mlp_residual(add(x_s, full.h_s), weights)};
    out.x_o = mlp_residual(add(blocks.x_o, h_o), weights);
    out.mask_o = blocks.mask_o;
    return out;
}

DitBlockWeights make_dit_weights(std::size_t d, Rng& rng) {
    const double std_dev = 1.0 / std::sqrt(static_cast<double>(d));
    DitBlockWeights w;
    w.proj.w_q = gaussian_matrix(d, d, 0.0, std_dev, rng);
    w.proj.w_k = gaussian_matrix(d, d, 0.0, std_dev, rng);
    w.proj.w_v = gaussian_matrix(d, d, 0.0, std_dev, rng);
    w.w_mlp1 = gaussian_matrix(d, 4 * d, 0.0, std_dev, rng);
    w.w_mlp2 = gaussian_matrix(4 * d, d, 0.0, std_dev, rng);
    return w;
}

std::vector<DitBlockWeights> make_stack_weights(std::size_t layers, std::size_t d, Rng& rng) {
    std::vector<DitBlockWeights> out;
    out.reserve(layers);
    for (std::size_t i = 0; i < layers; ++i) {
        Rng layer_rng = rng.child(i);
        out.push_back(make_dit_weights(d, layer_rng));
    }
    return out;
}

namespace {

nlohmann::json matrix_to_flat(const Matrix& m) { return nlohmann::json(m.data); }

Matrix matrix_from_flat(const nlohmann::json& arr, std::size_t rows, std::size_t cols,
                        const char* name) {
    if (!arr.is_array() || arr.size() != rows * cols) {
        throw InvalidInputError(std::string("weights_from_json: field ") + name +
                                " has wrong length");
    }
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = arr[i].get<double>();
    return m;
}

}  // namespace

std::string weights_to_json(const std::vector<DitBlockWeights>& blocks, std::size_t d,
                            std::uint64_t seed) {
    nlohmann::json doc;
    doc["d"] = d;
    doc["seed"] = seed;
    doc["blocks"] = nlohmann::json::array();
    for (const DitBlockWeights& b : blocks) {
        nlohmann::json jb;
        jb["w_q"] = matrix_to_flat(b.proj.w_q);
        jb["w_k"] = matrix_to_flat(b.proj.w_k);
        jb["w_v"] = matrix_to_flat(b.proj.w_v);
        jb["w_mlp1"] = matrix_to_flat(b.w_mlp1);
        jb["w_mlp2"] = matrix_to_flat(b.w_mlp2);
        doc["blocks"].push_back(std::move(jb));
    }
    return doc.dump();
}

std::vector<DitBlockWeights> weights_from_json(const std::string& text, std::size_t& d_out,
                                               std::uint64_t& seed_out) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidInputError(std::string("weights_from_json: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("d") || !doc.contains("seed") ||
        !doc.contains("blocks") || !doc["blocks"].is_array()) {
        throw InvalidInputError("weights_from_json: expected {d, seed, blocks: [...]}");
    }
    d_out = doc["d"].get<std::size_t>();
    seed_out = doc["seed"].get<std::uint64_t>();
    const std::size_t d = d_out;
    std::vector<DitBlockWeights> out;
    for (const auto& jb : doc["blocks"]) {
        DitBlockWeights b;
        b.proj.w_q = matrix_from_flat(jb.at("w_q"), d, d, "w_q");
        b.proj.w_k = matrix_from_flat(jb.at("w_k"), d, d, "w_k");
        b.proj.w_v = matrix_from_flat(jb.at("w_v"), d, d, "w_v");
        b.w_mlp1 = matrix_from_flat(jb.at("w_mlp1"), d, 4 * d, "w_mlp1");
        b.w_mlp2 = matrix_from_flat(jb.at("w_mlp2"), 4 * d, d, "w_mlp2");
        out.push_back(std::move(b));
    }
    return out;
}

}  // namespace stylefuse
