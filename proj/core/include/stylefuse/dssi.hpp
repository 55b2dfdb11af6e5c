#pragma once

#include <string>

#include "stylefuse/attention.hpp"

namespace stylefuse {

// How the output block is assembled from the three attention branches.
enum class FusionMode {
    vanilla,  // alpha_p V_p + alpha_s V_s + alpha_o V_o
    fssi,     // fixed prompt/style weights
    dssi,     // weights derived from measured alignment strengths
};

// Where branch alignment mass is read from. full_axis sums attention that
// was normalized over the whole key axis, so prompt and style compete for
// mass. block_local normalizes each branch by itself; every branch then
// carries total mass n_o and the derived weight degenerates to 0.5 — kept
// selectable to demonstrate exactly that collapse.
enum class AlignmentAxis {
    full_axis,
    block_local,
};

struct DssiConfig {
    double kappa = 2.3;          // shared gain on the prompt/style branches
    FusionMode mode = FusionMode::dssi;
    double lambda_floor = 1e-6;  // lower clamp on the log-mass alignments
    double fixed_lambda = 0.5;   // fssi prompt-branch weight w; style gets 1-w
    AlignmentAxis alignment = AlignmentAxis::full_axis;

    // Throws InvalidInputError when kappa <= 0, lambda_floor <= 0, or
    // fixed_lambda is outside [0, 1] (or anything is non-finite).
    void validate() const;
};

std::string to_string(FusionMode mode);
std::string to_string(AlignmentAxis axis);
bool fusion_mode_from_string(const std::string& text, FusionMode& out);
bool alignment_axis_from_string(const std::string& text, AlignmentAxis& out);

// ===== alignment strengths =====
//
// lambda_p = log(total attention mass the prompt branch received), clamped
// below by lambda_floor so that both strengths stay positive; same for
// lambda_s. gamma = lambda_p / lambda_s and lambda_star = gamma/(1+gamma)
// = lambda_p/(lambda_p+lambda_s), the minimizer of the reference loss.
// lambda_star weights the STYLE branch: strong prompt alignment pushes
// lambda_star toward 1, i.e. toward the style reference.
struct AlignmentStrengths {
    double lambda_p = 0.0;
    double lambda_s = 0.0;
    double gamma = 0.0;
    double lambda_star = 0.0;
};

AlignmentStrengths alignment_strengths(const BlockAttention& attn, const DssiConfig& cfg);

// ===== references and the scalar objective =====

// s: output assembled from prompt + own-output branches only (semantic
// reference); t: style + own-output branches only (style reference).
struct ReferenceOutputs {
    Matrix s;
    Matrix t;
};

ReferenceOutputs reference_outputs(const BlockAttention& attn, const QkvBlocks& qkv,
                                   const DssiConfig& cfg);

// L(lambda) = ||h(lambda) - s||_F^2 + gamma * ||h(lambda) - t||_F^2 with
// h(lambda) = (1-lambda) s + lambda t, evaluated from this definition (not
// from the simplified quadratic), so the closed form below is testable
// against it.
double dssi_loss(double lambda, const Matrix& s, const Matrix& t, double gamma);

// Closed-form minimizer gamma / (1 + gamma). gamma must be positive.
double lambda_star(double gamma);

// ===== fused outputs =====

// h = kappa * ((1-lambda*) alpha_p V_p + lambda* alpha_s V_s) + alpha_o V_o,
// algebraically identical to (1-lambda*) s + lambda* t.
Matrix dssi_output(const QkvBlocks& qkv, const BlockAttention& attn, const DssiConfig& cfg);

// h = kappa * (w alpha_p V_p + (1-w) alpha_s V_s) + alpha_o V_o with
// w = cfg.fixed_lambda on the prompt branch: w = 1 silences style, w = 0
// silences the prompt.
Matrix fssi_output(const QkvBlocks& qkv, const BlockAttention& attn, const DssiConfig& cfg);

// Dispatch on cfg.mode (vanilla / fssi / dssi).
Matrix fused_output(const QkvBlocks& qkv, const BlockAttention& attn, const DssiConfig& cfg);

}  // namespace stylefuse
