#include "stylefuse/dssi.hpp"

#include <cmath>

namespace stylefuse {

void DssiConfig::validate() const {
    if (!std::isfinite(kappa) || kappa <= 0.0) {
        throw InvalidInputError("DssiConfig.kappa must be finite and > 0");
    }
    if (!std::isfinite(lambda_floor) || lambda_floor <= 0.0) {
        throw InvalidInputError("DssiConfig.lambda_floor must be finite and > 0");
    }
    if (!std::isfinite(fixed_lambda) || fixed_lambda < 0.0 || fixed_lambda > 1.0) {
        throw InvalidInputError("DssiConfig.fixed_lambda must lie in [0, 1]");
    }
}

std::string to_string(FusionMode mode) {
    switch (mode) {
        case FusionMode::vanilla: return "vanilla";
        case FusionMode::fssi: return "fssi";
        case FusionMode::dssi: return "dssi";
    }
    return "unknown";
}

std::string to_string(AlignmentAxis axis) {
    return axis == AlignmentAxis::full_axis ? "full_axis" : "block_local";
}

bool fusion_mode_from_string(const std::string& text, FusionMode& out) {
    if (text == "vanilla") { out = FusionMode::vanilla; return true; }
    if (text == "fssi") { out = FusionMode::fssi; return true; }
    if (text == "dssi") { out = FusionMode::dssi; return true; }
    return false;
}

bool alignment_axis_from_string(const std::string& text, AlignmentAxis& out) {
    if (text == "full_axis") { out = AlignmentAxis::full_axis; return true; }
    if (text == "block_local") { out = AlignmentAxis::block_local; return true; }
    return false;
}

namespace {

double total_mass(const Matrix& alpha) {
    KahanSum acc;
    for (double v : alpha.data) acc.add(v);
    return acc.value();
}

}  // namespace

AlignmentStrengths alignment_strengths(const BlockAttention& attn, const DssiConfig& cfg) {
    cfg.validate();

    double mass_p = 0.0;
    double mass_s = 0.0;
    if (cfg.alignment == AlignmentAxis::full_axis) {
        mass_p = total_mass(attn.alpha_p);
        mass_s = total_mass(attn.alpha_s);
    } else {
        // Re-normalize each branch's logits by themselves. Every row then
        // sums to 1, so each branch mass is exactly n_o.
        const std::size_t n_p = attn.n_p();
        const std::size_t n_s = attn.n_s();
        mass_p = total_mass(row_softmax(slice_cols(attn.logits, 0, n_p)));
        mass_s = total_mass(row_softmax(slice_cols(attn.logits, n_p, n_p + n_s)));
    }

    // Clamp the log-masses from below so both strengths stay positive even
    // when a branch receives (almost) no attention; this also keeps gamma
    // finite.
    AlignmentStrengths out;
    out.lambda_p = std::max(std::log(mass_p), cfg.lambda_floor);
    out.lambda_s = std::max(std::log(mass_s), cfg.lambda_floor);
    out.gamma = out.lambda_p / out.lambda_s;
    out.lambda_star = lambda_star(out.gamma);
    return out;
}

ReferenceOutputs reference_outputs(const BlockAttention& attn, const QkvBlocks& qkv,
                                   const DssiConfig& cfg) {
    const Matrix own = matmul(attn.alpha_o, qkv.v_o);
    ReferenceOutputs out;
    out.s = add(scale(matmul(attn.alpha_p, qkv.v_p), cfg.kappa), own);
    out.t = add(scale(matmul(attn.alpha_s, qkv.v_s), cfg.kappa), own);
    return out;
}

double dssi_loss(double lambda, const Matrix& s, const Matrix& t, double gamma) {
    if (!s.same_shape(t)) throw ShapeError("dssi_loss: s and t shapes differ");
    if (!std::isfinite(lambda) || !std::isfinite(gamma) || gamma <= 0.0) {
        throw InvalidInputError("dssi_loss: lambda must be finite and gamma > 0");
    }
    KahanSum to_s;
    KahanSum to_t;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double h = (1.0 - lambda) * s.data[i] + lambda * t.data[i];
        const double ds = h - s.data[i];
        const double dt = h - t.data[i];
        to_s.add(ds * ds);
        to_t.add(dt * dt);
    }
    return to_s.value() + gamma * to_t.value();
}

double lambda_star(double gamma) {
    if (!std::isfinite(gamma) || gamma <= 0.0) {
        throw InvalidInputError("lambda_star: gamma must be finite and > 0");
    }
    return gamma / (1.0 + gamma);
}

namespace {

Matrix weighted_fusion(const QkvBlocks& qkv, const BlockAttention& attn, double prompt_weight,
                       double style_weight, double kappa) {
    Matrix h = scale(matmul(attn.alpha_p, qkv.v_p), kappa * prompt_weight);
    h = add(h, scale(matmul(attn.alpha_s, qkv.v_s), kappa * style_weight));
    h = add(h, matmul(attn.alpha_o, qkv.v_o));
    return h;
}

}  // namespace

Matrix dssi_output(const QkvBlocks& qkv, const BlockAttention& attn, const DssiConfig& cfg) {
    const AlignmentStrengths a = alignment_strengths(attn, cfg);
    return weighted_fusion(qkv, attn, 1.0 - a.lambda_star, a.lambda_star, cfg.kappa);
}

Matrix fssi_output(const QkvBlocks& qkv, const BlockAttention& attn, const DssiConfig& cfg) {
    cfg.validate();
    return weighted_fusion(qkv, attn, cfg.fixed_lambda, 1.0 - cfg.fixed_lambda, cfg.kappa);
}

Matrix fused_output(const QkvBlocks& qkv, const BlockAttention& attn, const DssiConfig& cfg) {
    switch (cfg.mode) {
        case FusionMode::vanilla: return fuse_vanilla(attn, qkv);
        case FusionMode::fssi: return fssi_output(qkv, attn, cfg);
        case FusionMode::dssi: return dssi_output(qkv, attn, cfg);
    }
    throw InvalidInputError("fused_output: unknown fusion mode");
}

}  // namespace stylefuse
